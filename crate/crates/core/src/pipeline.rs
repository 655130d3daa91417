//! Experiment orchestration: synthetic data, the modulus-only reconstruction chain,
//! evaluation against sealed ground truth, the distinguishability probe and the
//! distributed-source study.
//!
//! A run directory holds
//! `data/` (modulus-only measurements and chord geometry),
//! `sealed/` (complex ground truth, read only by evaluation),
//! `stages/` (outputs of every reconstruction stage) and the report files.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::forward_freq::{
    check_asymptote, extract_line_integral, fourier_bridge, fourier_bridge_scattered,
    incident_field_c, laplace_fourier, AsymptoteKind, AsymptoteReport, AsymptoticSignature,
    SpectralTrace,
};
use crate::forward_time::{
    neumann_point_source, neumann_volume_source, odd_derivatives_at_zero, scattered_time_field,
    NeumannOptions, TimeTrace,
};
use crate::geometry::{
    chord_integral, measurement_pairs, mollified_source, Chord, GridSpec, Phantom, Potential, Vec3,
};
use crate::io::{self, ArrayHeader, Dtype};
use crate::phase_retrieval::{
    count_zeros_upper, extend_modulus, rectangle_contour, retrieve_phase_at, ModulusTrace,
    PhaseOptions,
};
use crate::quad::SphereRule;
use crate::radon::{
    assemble_volume, chords_to_sinogram, fbp_invert, plane_chords, relative_l2, Sinogram, Slice,
};
use crate::report::{AsymptoteRow, LineRow, RunReport, StageSummary};
use crate::volterra::{
    reduce_first_to_second, uniqueness_mechanism, uniqueness_window, ConvolutionKernel, Verdict,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Trapezoid nodes used for oracle line integrals.
pub const ORACLE_NODES: usize = 2001;
/// Order of the even rational model used when the band must be continued.
pub const EXTENSION_ORDER: usize = 4;
/// Time steps resolving the early-time window of the uniqueness mechanism.
pub const MECHANISM_STEPS: usize = 32;
/// Relative level below which a leading coefficient counts as zero.
pub const LEADING_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct RunDirs {
    pub root: PathBuf,
    pub data: PathBuf,
    pub sealed: PathBuf,
    pub stages: PathBuf,
}

impl RunDirs {
    pub fn new(root: &Path) -> RunDirs {
        RunDirs {
            root: root.to_path_buf(),
            data: root.join("data"),
            sealed: root.join("sealed"),
            stages: root.join("stages"),
        }
    }

    fn create(&self) -> Result<()> {
        for d in [&self.root, &self.data, &self.sealed, &self.stages] {
            std::fs::create_dir_all(d)?;
        }
        Ok(())
    }

    pub fn chords(&self, s: usize) -> PathBuf {
        self.data.join(format!("chords_{s:02}.csv"))
    }
    pub fn modulus(&self, s: usize) -> PathBuf {
        self.data.join(format!("modulus_{s:02}.bin"))
    }
    pub fn field(&self, s: usize) -> PathBuf {
        self.sealed.join(format!("field_{s:02}.bin"))
    }
    pub fn oracle(&self, s: usize) -> PathBuf {
        self.sealed.join(format!("oracle_{s:02}.csv"))
    }
    pub fn phase(&self, s: usize) -> PathBuf {
        self.stages.join(format!("phase_{s:02}.bin"))
    }
    pub fn phase_summary(&self, s: usize) -> PathBuf {
        self.stages.join(format!("phase_summary_{s:02}.csv"))
    }
    pub fn lines(&self, s: usize) -> PathBuf {
        self.stages.join(format!("lines_{s:02}.csv"))
    }
    pub fn sinogram(&self, s: usize) -> PathBuf {
        self.stages.join(format!("sinogram_{s:02}.csv"))
    }
    pub fn slice(&self, s: usize) -> PathBuf {
        self.stages.join(format!("slice_{s:02}.bin"))
    }
    pub fn volume(&self) -> PathBuf {
        self.stages.join("volume.bin")
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn chord_row(c: &Chord, i: usize, j: usize) -> Vec<f64> {
    vec![
        c.source.x,
        c.source.y,
        c.source.z,
        c.receiver.x,
        c.receiver.y,
        c.receiver.z,
        i as f64,
        j as f64,
    ]
}

/// Chords of one slice as written by `run_forward`: `(chord, i, j)`.
pub fn read_chords(path: &Path) -> Result<Vec<(Chord, usize, usize)>> {
    io::read_csv(path)?
        .into_iter()
        .map(|r| {
            if r.len() != 8 {
                return Err(Error::Format(format!(
                    "chord rows need 8 fields in {}",
                    path.display()
                )));
            }
            let c = Chord::new(Vec3::new(r[0], r[1], r[2]), Vec3::new(r[3], r[4], r[5]))?;
            Ok((c, r[6] as usize, r[7] as usize))
        })
        .collect()
}

fn point_source_signature(chord: &Chord) -> AsymptoticSignature {
    let d = chord.length();
    AsymptoticSignature {
        c: Complex64::new(1.0 / (4.0 * PI * d), 0.0),
        n: 0,
        l: d,
    }
}

/// Winding count of `u / u0` on the rectangle `[-K, K] x [0, height]`.
fn upper_zero_count(trace: &TimeTrace, k_max: f64, height: f64, n_side: usize) -> Result<i64> {
    let d = trace.front_time;
    let contour = rectangle_contour(-k_max, k_max, 0.0, height, n_side);
    let vals = contour
        .iter()
        .map(|k| Ok(laplace_fourier(trace, *k)? / incident_field_c(d, *k)))
        .collect::<Result<Vec<_>>>()?;
    count_zeros_upper(&vals)
}

struct ChordForward {
    modulus: Vec<f64>,
    field: Option<Vec<Complex64>>,
    oracle: f64,
    front_value: f64,
    zeros: i64,
}

/// Simulates data for the configured problem and writes `data/` and `sealed/`.
pub fn run_forward(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let dirs = RunDirs::new(out);
    dirs.create()?;
    cfg.save(&dirs.data.join("config.toml"))?;
    match cfg.problem {
        1 | 2 => forward_chords(cfg, &dirs),
        _ => {
            let (report, _) = distributed_study(cfg, &dirs, false)?;
            Ok(report)
        }
    }
}

fn forward_chords(cfg: &ExperimentConfig, dirs: &RunDirs) -> Result<RunReport> {
    let t0 = Instant::now();
    let scene = cfg.scene()?;
    let q = cfg.phantom();
    let nopts = cfg.neumann_options();
    let band = cfg.band_grid();
    let mut report = RunReport::new("simulate", cfg.problem, cfg.seed);
    let scattered = cfg.problem == 2;
    let stride = cfg.spectral.sealed_stride;
    let mut n_chords = 0;
    let mut n_leading_zero = 0;
    let mut max_terms: f64 = 0.0;
    let mut max_zeros = 0;
    let mut n_checked = 0;

    for (s, plane) in cfg.planes().iter().enumerate() {
        let chords = stage(
            "simulate",
            plane_chords(&scene, plane, cfg.tomography.n_theta, cfg.tomography.n_s),
        )?;
        let results: Vec<ChordForward> = stage(
            "simulate",
            chords
                .par_iter()
                .enumerate()
                .map(|(idx, (c, _, _))| {
                    let tr = neumann_point_source(&q, c, &nopts)?;
                    let spec = if scattered {
                        fourier_bridge_scattered(&tr.trace, &band)?
                    } else {
                        fourier_bridge(&tr.trace, &band)?
                    };
                    let sealed = idx % stride == 0;
                    let zeros = if sealed && !scattered {
                        upper_zero_count(
                            &tr.trace,
                            cfg.scene.k_max,
                            cfg.spectral.zero_check_height,
                            256,
                        )?
                    } else {
                        -1
                    };
                    Ok(ChordForward {
                        modulus: spec.values.iter().map(|v| v.norm()).collect(),
                        field: sealed.then_some(spec.values),
                        oracle: chord_integral(&q, c, ORACLE_NODES)?,
                        front_value: tr.trace.values[tr.trace.front_index],
                        zeros,
                    })
                })
                .collect::<Result<Vec<_>>>(),
        )?;
        // The term norms of a one-term series are the trace norm; keep the largest for the report.
        for (c, r) in chords.iter().zip(&results) {
            let scale = 1.0 / (4.0 * PI * c.0.length());
            if r.front_value.abs() <= LEADING_FLOOR * scale {
                n_leading_zero += 1;
            }
            max_terms = max_terms.max(r.front_value.abs() / scale);
            if r.zeros >= 0 {
                n_checked += 1;
                max_zeros = max_zeros.max(r.zeros);
            }
        }
        n_chords += chords.len();

        let rows: Vec<Vec<f64>> = chords
            .iter()
            .map(|(c, i, j)| chord_row(c, *i, *j))
            .collect();
        io::write_csv(&dirs.chords(s), "sx,sy,sz,rx,ry,rz,i,j", &rows)?;
        let nk = band.len();
        let header = ArrayHeader::new(
            if scattered {
                "scattered-modulus"
            } else {
                "modulus"
            },
            Dtype::F64,
            vec![chords.len(), nk],
        )
        .with_geometry(vec![1.0, cfg.spectral.dk], vec![0.0, cfg.scene.k_min]);
        let flat: Vec<f64> = results
            .iter()
            .flat_map(|r| r.modulus.iter().cloned())
            .collect();
        io::write_f64_array(&dirs.modulus(s), &header, &flat)?;

        let sealed: Vec<Complex64> = results
            .iter()
            .filter_map(|r| r.field.clone())
            .flatten()
            .collect();
        let n_sealed = sealed.len() / nk.max(1);
        let header = ArrayHeader::new("field", Dtype::C64, vec![n_sealed, nk]).with_geometry(
            vec![stride as f64, cfg.spectral.dk],
            vec![0.0, cfg.scene.k_min],
        );
        io::write_c64_array(&dirs.field(s), &header, &sealed)?;
        let rows: Vec<Vec<f64>> = results
            .iter()
            .enumerate()
            .map(|(idx, r)| vec![idx as f64, r.oracle, r.front_value, r.zeros as f64])
            .collect();
        io::write_csv(
            &dirs.oracle(s),
            "index,line_integral,front_value,upper_zeros",
            &rows,
        )?;
    }

    let mut st = StageSummary {
        stage: "simulate".into(),
        n_items: n_chords,
        ..Default::default()
    };
    st.residuals
        .insert("max_front_value_over_incident".into(), max_terms);
    report.stages.push(st);
    if scattered {
        let min_q_on_s = q_min_on_sphere(&q, cfg.scene.g1_radius);
        report.flag(
            "theorem2_hypothesis_q_nonzero_on_S",
            11,
            min_q_on_s > 0.0,
            format!(
                "min q on S = {min_q_on_s:.3e}; the hypothesis q(x) != 0 on S is required for IP2"
            ),
        );
        report.flag(
            "ip2_line_integrals_nonzero",
            11,
            n_leading_zero == 0,
            format!("LeadingValueZero: {n_leading_zero} of {n_chords} chords have a vanishing scattered leading coefficient"),
        );
    } else {
        report.note(format!("zero-free check on {n_checked} sealed chords: max upper-half-plane zero count {max_zeros}"));
    }
    report.wall_times.insert("simulate".into(), seconds(t0));
    Ok(report)
}

/// Minimum of `q` over a product-rule sample of the sphere of radius `r`.
pub fn q_min_on_sphere(q: &dyn Potential, r: f64) -> f64 {
    let rule = SphereRule::product(24, 48);
    rule.dirs
        .iter()
        .map(|w| q.value(*w * r))
        .fold(f64::INFINITY, f64::min)
}

fn window_indices(cfg: &ExperimentConfig, full: &[f64]) -> Vec<usize> {
    let (lo, hi) = cfg.spectral.fit_window;
    (0..full.len())
        .filter(|&i| full[i] >= lo - 1e-9 && full[i] <= hi + 1e-9)
        .step_by(cfg.spectral.window_stride)
        .collect()
}

fn require_ip1(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.problem != 1 {
        return Err(Error::InvalidArgument(format!(
            "reconstruction is implemented for IP1, config has IP{}",
            cfg.problem
        )));
    }
    Ok(())
}

/// Complex field of one chord on the window nodes, recovered from its band modulus.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievedChord {
    pub k: Vec<f64>,
    pub values: Vec<Complex64>,
    pub gap: f64,
    pub tail_power: f64,
    pub extension_residual: Option<f64>,
}

/// Continues `modulus` (sampled on `band`) to `full`, then retrieves the phase at `full[idx]`.
pub fn retrieve_chord(
    chord: &Chord,
    band: &[f64],
    modulus: &[f64],
    full: &[f64],
    idx: &[usize],
    opts: &PhaseOptions,
) -> Result<RetrievedChord> {
    let m = ModulusTrace::new(band.to_vec(), modulus.to_vec())?;
    let ext = extend_modulus(&m, full, EXTENSION_ORDER)?;
    let (phase, summary) =
        retrieve_phase_at(&ext.trace, &point_source_signature(chord), opts, idx)?;
    let values = idx
        .iter()
        .zip(&phase)
        .map(|(i, p)| Complex64::from_polar(ext.trace.values[*i], *p))
        .collect();
    Ok(RetrievedChord {
        k: idx.iter().map(|i| full[*i]).collect(),
        values,
        gap: summary.gap,
        tail_power: summary.tail_power,
        extension_residual: ext.leave_out_residual,
    })
}

/// Line integral of the unknown along `chord` from its band modulus, using the
/// configured grids and fit window.
pub fn chord_line_integral_from_modulus(
    cfg: &ExperimentConfig,
    chord: &Chord,
    band: &[f64],
    modulus: &[f64],
) -> Result<f64> {
    let full = cfg.full_grid();
    let idx = window_indices(cfg, &full);
    let r = retrieve_chord(chord, band, modulus, &full, &idx, &cfg.phase_options())?;
    let (lo, hi) = (r.k[0], r.k[r.k.len() - 1]);
    let tr = SpectralTrace {
        k: r.k,
        values: r.values,
        signature: point_source_signature(chord),
    };
    Ok(extract_line_integral(&tr, chord, (lo, hi))?.value)
}

/// Band modulus `|u(k)|` of one chord, on the configured band grid.
pub fn chord_modulus(
    cfg: &ExperimentConfig,
    q: &Phantom,
    chord: &Chord,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let band = cfg.band_grid();
    let tr = neumann_point_source(q, chord, &cfg.neumann_options())?;
    let spec = fourier_bridge(&tr.trace, &band)?;
    Ok((band, spec.values.iter().map(|v| v.norm()).collect()))
}

/// Stage 1: band modulus, continued to the full line, to complex values on the fit window.
pub fn retrieve_phase_stage(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    require_ip1(cfg)?;
    let t0 = Instant::now();
    let dirs = RunDirs::new(out);
    std::fs::create_dir_all(&dirs.stages)?;
    let full = cfg.full_grid();
    let idx = window_indices(cfg, &full);
    let popts = cfg.phase_options();
    let mut report = RunReport::new("retrieve-phase", cfg.problem, cfg.seed);
    let mut st = StageSummary {
        stage: "retrieve_phase".into(),
        ..Default::default()
    };
    let mut max_gap: f64 = 0.0;
    let mut max_tail: f64 = 0.0;
    let mut max_extension: f64 = 0.0;
    for s in 0..cfg.tomography.n_slices {
        let chords = stage("retrieve_phase", read_chords(&dirs.chords(s)))?;
        let (h, data) = stage("retrieve_phase", io::read_f64_array(&dirs.modulus(s)))?;
        if h.dims.len() != 2 || h.dims[0] != chords.len() {
            return Err(Error::Format(format!(
                "modulus file for slice {s} does not match its chords"
            ))
            .in_stage("retrieve_phase"));
        }
        let nk = h.dims[1];
        let band: Vec<f64> = (0..nk)
            .map(|i| h.origin[1] + i as f64 * h.spacing[1])
            .collect();
        let results: Vec<Result<(Vec<Complex64>, f64, f64, Option<f64>)>> = chords
            .par_iter()
            .enumerate()
            .map(|(c, (chord, _, _))| {
                let r = retrieve_chord(
                    chord,
                    &band,
                    &data[c * nk..(c + 1) * nk],
                    &full,
                    &idx,
                    &popts,
                )?;
                Ok((r.values, r.gap, r.tail_power, r.extension_residual))
            })
            .collect();
        let mut flat = Vec::with_capacity(chords.len() * idx.len());
        let mut rows = Vec::with_capacity(chords.len());
        for (c, r) in results.iter().enumerate() {
            match r {
                Ok((v, gap, tail, ext)) => {
                    flat.extend_from_slice(v);
                    rows.push(vec![c as f64, *gap, *tail, 0.0]);
                    max_gap = max_gap.max(*gap);
                    max_tail = max_tail.max(tail.abs());
                    max_extension = max_extension.max(ext.unwrap_or(0.0));
                }
                Err(e) => {
                    flat.extend(
                        std::iter::repeat(Complex64::new(f64::NAN, f64::NAN)).take(idx.len()),
                    );
                    rows.push(vec![c as f64, f64::NAN, f64::NAN, 1.0]);
                    st.n_failed += 1;
                    report.note(format!(
                        "slice {s} chord {c}: unreconstructable at retrieve_phase: {e}"
                    ));
                }
            }
        }
        st.n_items += chords.len();
        let k0 = full[idx[0]];
        let header = ArrayHeader::new("retrieved-field", Dtype::C64, vec![chords.len(), idx.len()])
            .with_geometry(
                vec![1.0, cfg.spectral.dk * cfg.spectral.window_stride as f64],
                vec![0.0, k0],
            );
        io::write_c64_array(&dirs.phase(s), &header, &flat)?;
        io::write_csv(
            &dirs.phase_summary(s),
            "index,convention_gap,tail_power,status",
            &rows,
        )?;
    }
    st.residuals.insert("max_convention_gap".into(), max_gap);
    st.residuals.insert("max_tail_power".into(), max_tail);
    st.residuals
        .insert("max_extension_residual".into(), max_extension);
    report.stages.push(st);
    report.note("zero-free assumption: retrieved phases assume no upper-half-plane zeros (modulus-only mode)");
    report
        .wall_times
        .insert("retrieve_phase".into(), seconds(t0));
    Ok(report)
}

/// Stage 2: line integrals from the retrieved fields.
pub fn extract_lines_stage(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    require_ip1(cfg)?;
    let t0 = Instant::now();
    let dirs = RunDirs::new(out);
    let mut report = RunReport::new("extract-lines", cfg.problem, cfg.seed);
    let mut st = StageSummary {
        stage: "extract_lines".into(),
        ..Default::default()
    };
    let mut max_ratio: f64 = 0.0;
    for s in 0..cfg.tomography.n_slices {
        let chords = stage("extract_lines", read_chords(&dirs.chords(s)))?;
        let (h, data) = stage("extract_lines", io::read_c64_array(&dirs.phase(s)))?;
        let nw = h.dims[1];
        let ks: Vec<f64> = (0..nw)
            .map(|i| h.origin[1] + i as f64 * h.spacing[1])
            .collect();
        let mut rows = Vec::with_capacity(chords.len());
        for (c, (chord, i, j)) in chords.iter().enumerate() {
            let values = data[c * nw..(c + 1) * nw].to_vec();
            let fit = if values.iter().any(|v| !v.re.is_finite()) {
                Err(Error::InvalidArgument("no retrieved field".into()))
            } else {
                let tr = SpectralTrace {
                    k: ks.clone(),
                    values,
                    signature: point_source_signature(chord),
                };
                extract_line_integral(&tr, chord, (ks[0], ks[nw - 1]))
            };
            match fit {
                Ok(f) => {
                    max_ratio = max_ratio.max(f.residual / f.threshold);
                    rows.push(vec![
                        c as f64,
                        *i as f64,
                        *j as f64,
                        f.value,
                        f.residual,
                        f.threshold,
                        0.0,
                    ]);
                }
                Err(e) => {
                    st.n_failed += 1;
                    report.note(format!(
                        "slice {s} chord {c}: unreconstructable at extract_lines: {e}"
                    ));
                    rows.push(vec![
                        c as f64,
                        *i as f64,
                        *j as f64,
                        f64::NAN,
                        f64::NAN,
                        f64::NAN,
                        1.0,
                    ]);
                }
            }
        }
        st.n_items += chords.len();
        io::write_csv(
            &dirs.lines(s),
            "index,i,j,value,residual,threshold,status",
            &rows,
        )?;
    }
    st.residuals
        .insert("max_fit_residual_over_threshold".into(), max_ratio);
    report.stages.push(st);
    report
        .wall_times
        .insert("extract_lines".into(), seconds(t0));
    Ok(report)
}

/// Stage 3: sinograms, filtered back-projection and volume assembly.
pub fn invert_stage(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let t0 = Instant::now();
    let dirs = RunDirs::new(out);
    let scene = cfg.scene()?;
    let t = &cfg.tomography;
    let mut report = RunReport::new("invert", cfg.problem, cfg.seed);
    let mut st = StageSummary {
        stage: "invert".into(),
        ..Default::default()
    };
    let mut slices = Vec::with_capacity(t.n_slices);
    let mut max_spread: f64 = 0.0;
    let mut max_mass: f64 = 0.0;
    for (s, plane) in cfg.planes().iter().enumerate() {
        let chords = stage("invert", read_chords(&dirs.chords(s)))?;
        let lines = stage("invert", io::read_csv(&dirs.lines(s)))?;
        let pairs: Vec<(Chord, f64)> = lines
            .iter()
            .filter(|r| r.len() == 7 && r[6] == 0.0)
            .map(|r| (chords[r[0] as usize].0, r[3]))
            .collect();
        let sino = stage(
            "invert",
            chords_to_sinogram(&scene, &pairs, plane, t.n_theta, t.n_s),
        )?;
        sino.write_csv(&dirs.sinogram(s))?;
        let masses = sino.row_masses();
        let mean = masses.iter().sum::<f64>() / masses.len() as f64;
        let lo = masses.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = masses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max_spread = max_spread.max(hi - lo);
        max_mass = max_mass.max(mean.abs());
        let slice = stage("invert", fbp_invert(&sino, cfg.slice_grid()))?;
        write_slice(&dirs.slice(s), &slice)?;
        slices.push(slice);
        st.n_items += 1;
    }
    let grid = GridSpec::covering(cfg.scene.omega_radius, t.volume_n);
    let known = cfg.phantom().known_part();
    let vol = stage("invert", assemble_volume(&slices, &known, &scene, grid))?;
    let header = ArrayHeader::new("potential", Dtype::F64, vec![grid.n; 3]).with_geometry(
        vec![grid.h; 3],
        vec![grid.origin.x, grid.origin.y, grid.origin.z],
    );
    io::write_f64_array(&dirs.volume(), &header, &vol.values)?;
    if max_mass > 0.0 {
        st.residuals
            .insert("sinogram_row_mass_spread".into(), max_spread / max_mass);
    }
    report.stages.push(st);
    report.wall_times.insert("invert".into(), seconds(t0));
    Ok(report)
}

fn write_slice(path: &Path, slice: &Slice) -> Result<()> {
    let n = slice.grid.n;
    let h = 2.0 * slice.grid.half_width / n as f64;
    let o = -slice.grid.half_width + 0.5 * h;
    let header =
        ArrayHeader::new("slice", Dtype::F64, vec![n, n]).with_geometry(vec![h, h], vec![o, o]);
    io::write_f64_array(path, &header, &slice.values)
}

/// Reads `stages/volume.bin`.
pub fn read_volume(out: &Path) -> Result<(GridSpec, Vec<f64>)> {
    let (h, v) = io::read_f64_array(&RunDirs::new(out).volume())?;
    if h.dims.len() != 3 {
        return Err(Error::Format("volume must be three-dimensional".into()));
    }
    let grid = GridSpec {
        n: h.dims[0],
        h: h.spacing[0],
        origin: Vec3::new(h.origin[0], h.origin[1], h.origin[2]),
    };
    Ok((grid, v))
}

/// The modulus-only chain: retrieve phase, extract line integrals, invert. Reads only
/// `data/` and `stages/`.
pub fn run_reconstruct_ip1(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    require_ip1(cfg)?;
    let mut report = RunReport::new("reconstruct", cfg.problem, cfg.seed);
    report.merge(retrieve_phase_stage(cfg, out)?);
    report.merge(extract_lines_stage(cfg, out)?);
    report.merge(invert_stage(cfg, out)?);
    Ok(report)
}

/// Compares stage outputs with the sealed ground truth and the configured phantom.
pub fn evaluate(cfg: &ExperimentConfig, out: &Path, report: &mut RunReport) -> Result<()> {
    let dirs = RunDirs::new(out);
    let scene = cfg.scene()?;
    let q = cfg.phantom();
    let mut max_abs: f64 = 0.0;
    let mut oracle_max: f64 = 0.0;
    let mut rel = Vec::new();
    let mut n_zero_checked = 0;
    let mut n_with_zeros = 0;
    let mut n_unreconstructable = 0;
    for s in 0..cfg.tomography.n_slices {
        let lines = io::read_csv(&dirs.lines(s))?;
        let oracle = io::read_csv(&dirs.oracle(s))?;
        for o in &oracle {
            oracle_max = oracle_max.max(o[1].abs());
            if o[3] >= 0.0 {
                n_zero_checked += 1;
                if o[3] > 0.0 {
                    n_with_zeros += 1;
                }
            }
        }
        for (l, o) in lines.iter().zip(&oracle) {
            let ok = l[6] == 0.0;
            if ok {
                max_abs = max_abs.max((l[3] - o[1]).abs());
            } else {
                n_unreconstructable += 1;
            }
            report.lines.push(LineRow {
                slice: s,
                i: l[1] as usize,
                j: l[2] as usize,
                extracted: ok.then_some(l[3]),
                oracle: Some(o[1]),
                status: if ok {
                    "ok".into()
                } else {
                    "unreconstructable".into()
                },
            });
        }
    }
    for r in &report.lines {
        if let (Some(e), Some(o)) = (r.extracted, r.oracle) {
            if o.abs() >= 0.1 * oracle_max {
                rel.push((e - o).abs() / o.abs());
            }
        }
    }
    let max_rel = rel.iter().cloned().fold(0.0, f64::max);
    report
        .errors
        .insert("line_integral_max_abs_error".into(), max_abs);
    report
        .errors
        .insert("line_integral_max_rel_error".into(), max_rel);
    report.flag(
        "line_integrals_within_5pct",
        7,
        !rel.is_empty() && max_rel <= 0.05,
        format!(
            "max relative error {max_rel:.4} over {} chords with |oracle| >= 10% of max",
            rel.len()
        ),
    );
    report.flag(
        "zero_free_assumption",
        9,
        n_with_zeros == 0,
        format!("{n_with_zeros} of {n_zero_checked} sealed traces have upper-half-plane zeros; {n_unreconstructable} chords unreconstructable"),
    );

    let (grid, vol) = read_volume(out)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (idx, v) in vol.iter().enumerate() {
        let p = grid.node_of(idx);
        if scene.in_omega(p) {
            a.push(*v);
            b.push(q.value(p));
        }
    }
    let truth_sup = b.iter().cloned().fold(0.0, f64::max);
    if truth_sup > 0.0 {
        let err = relative_l2(&a, &b);
        report.errors.insert("volume_rel_l2".into(), err);
        report.flag(
            "volume_error_within_15pct",
            8,
            err <= 0.15,
            format!("relative L2 error inside Omega {err:.4}"),
        );
    } else {
        let sup = a.iter().cloned().fold(0.0, f64::max);
        report.errors.insert("volume_sup_inside_omega".into(), sup);
        report.note(format!(
            "unknown part is zero; reconstructed sup inside Omega {sup:.3e}"
        ));
    }
    Ok(())
}

/// Simulation, reconstruction and evaluation in one run directory; writes `report.{json,txt}`.
pub fn full_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let t0 = Instant::now();
    let mut report = RunReport::new("full-pipeline", cfg.problem, cfg.seed);
    report.merge(run_forward(cfg, out)?);
    match cfg.problem {
        1 => {
            report.merge(run_reconstruct_ip1(cfg, out)?);
            evaluate(cfg, out, &mut report)?;
        }
        2 => report.note("IP2: data generated and hypotheses checked; reconstruction is implemented for IP1 only"),
        _ => {}
    }
    report.wall_times.insert("total".into(), seconds(t0));
    report.write(out, "report")?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessOutcome {
    /// `max | |u1|^2 - |u2|^2 |` over chords and frequencies.
    pub data_gap: f64,
    /// Change of `|u1|^2` under a refined discretization.
    pub noise_floor: f64,
    pub identical: bool,
    /// Per-chord homogeneous Volterra verdicts on the early-time window.
    pub verdicts: Vec<Verdict>,
}

impl UniquenessOutcome {
    pub fn lambda_sup(&self) -> f64 {
        self.verdicts
            .iter()
            .map(|v| v.lambda_sup)
            .fold(0.0, f64::max)
    }
}

fn refined(opts: &NeumannOptions) -> NeumannOptions {
    let mut r = *opts;
    r.dt *= 0.5;
    r.surface.n_tau = opts.surface.n_tau * 3 / 2;
    r.surface.n_phi = opts.surface.n_phi * 3 / 2;
    r.surface.n_scan = opts.surface.n_scan * 2;
    r
}

/// Distinguishability of two phantoms from `|u|^2` on short chords, and the Volterra
/// mechanism on the early-time window.
pub fn verify_uniqueness(
    cfg: &ExperimentConfig,
    q1: &Phantom,
    q2: &Phantom,
) -> Result<(UniquenessOutcome, RunReport)> {
    let t0 = Instant::now();
    let scene = cfg.scene()?;
    q1.validate(&scene)?;
    q2.validate(&scene)?;
    if q1.background != q2.background {
        return Err(Error::PreconditionViolated(
            "the phantoms differ outside Omega".into(),
        ));
    }
    let identical = q1.unknown == q2.unknown;
    let u = &cfg.uniqueness;
    let chords = measurement_pairs(&scene, u.n_sources, u.n_receivers, cfg.seed)?;
    let n_k = (u.k_max / u.dk).round() as usize;
    let ks: Vec<f64> = (0..=n_k).map(|i| i as f64 * u.dk).collect();
    let opts = cfg.neumann_options();
    let fine = refined(&opts);

    let per_chord = chords
        .par_iter()
        .map(|c| {
            let t1 = neumann_point_source(q1, c, &opts)?.trace;
            let t2 = neumann_point_source(q2, c, &opts)?.trace;
            let tf = neumann_point_source(q1, c, &fine)?.trace;
            let s1 = fourier_bridge(&t1, &ks)?;
            let s2 = fourier_bridge(&t2, &ks)?;
            let sf = fourier_bridge(&tf, &ks)?;
            let mut gap: f64 = 0.0;
            let mut floor: f64 = 0.0;
            for m in 0..ks.len() {
                gap = gap.max((s1.values[m].norm_sqr() - s2.values[m].norm_sqr()).abs());
                floor = floor.max((s1.values[m].norm_sqr() - sf.values[m].norm_sqr()).abs());
            }
            let d = c.length();
            let window = uniqueness_window(scene.epsilon, d)?;
            let early = NeumannOptions {
                t_max: Some(d + window * (1.0 + 2.0 / MECHANISM_STEPS as f64)),
                dt: window / MECHANISM_STEPS as f64,
                ..opts
            };
            let e1 = neumann_point_source(q1, c, &early)?.trace;
            let e2 = neumann_point_source(q2, c, &early)?.trace;
            let w = 4.0 * PI * d;
            let kernel: Vec<f64> = e1.values[e1.front_index..].iter().map(|v| w * v).collect();
            let forcing: Vec<f64> = e1.values[e1.front_index..]
                .iter()
                .zip(&e2.values[e2.front_index..])
                .map(|(a, b)| w * (a - b))
                .collect();
            let verdict = uniqueness_mechanism(&kernel, Some(&forcing), e1.dt, window)?;
            Ok((gap, floor, verdict))
        })
        .collect::<Result<Vec<_>>>()?;

    let data_gap = per_chord.iter().map(|r| r.0).fold(0.0, f64::max);
    let noise_floor = per_chord.iter().map(|r| r.1).fold(0.0, f64::max);
    let verdicts: Vec<Verdict> = per_chord.into_iter().map(|r| r.2).collect();
    let outcome = UniquenessOutcome {
        data_gap,
        noise_floor,
        identical,
        verdicts,
    };

    let mut report = RunReport::new("verify-uniqueness", 1, cfg.seed);
    report.errors.insert("data_gap".into(), data_gap);
    report.errors.insert("noise_floor".into(), noise_floor);
    report
        .errors
        .insert("lambda_sup".into(), outcome.lambda_sup());
    if identical {
        report.flag(
            "identical_phantoms_gap_below_floor",
            10,
            data_gap <= noise_floor,
            format!("gap {data_gap:.3e} vs floor {noise_floor:.3e}"),
        );
        let unique = outcome
            .verdicts
            .iter()
            .all(|v| v.unique && v.lambda_sup == 0.0);
        report.flag(
            "lambda_identically_zero",
            10,
            unique,
            format!("max |lambda| = {:.3e}", outcome.lambda_sup()),
        );
    } else {
        report.flag(
            "distinct_phantoms_distinguishable",
            10,
            data_gap > 10.0 * noise_floor,
            format!(
                "gap {data_gap:.3e} vs 10 x floor {:.3e}",
                10.0 * noise_floor
            ),
        );
        report.note("the gap is a distinguishability probe, not a proof of uniqueness");
    }
    report.stages.push(StageSummary {
        stage: "verify_uniqueness".into(),
        n_items: chords.len(),
        ..Default::default()
    });
    report
        .wall_times
        .insert("verify_uniqueness".into(), seconds(t0));
    Ok((outcome, report))
}

/// Per-receiver results of the distributed-source study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceiverStudy {
    pub receiver: Vec3,
    pub g: f64,
    pub qg: f64,
    pub total: AsymptoteReport,
    pub scattered: Option<AsymptoteReport>,
    /// `V'(0)` measured from the trace.
    pub order2_leading: f64,
    pub order2_lambda: Option<f64>,
    /// `V_s'''(0)` measured from the trace.
    pub order4_leading: f64,
    /// Scale of the order-4 reduction from the trace, next to `-1/(qg)`.
    pub order4_scale: Option<(f64, f64)>,
    pub order4_lambda: Option<f64>,
    pub leading_value_zero: bool,
}

fn receivers_on_cap(cfg: &ExperimentConfig) -> Vec<Vec3> {
    let c = &cfg.ip34;
    let axis = c.source_direction.normalized();
    let (e1, e2) = axis.orthonormal_pair();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..c.n_receivers)
        .map(|i| {
            let alpha = if c.n_receivers > 1 {
                c.cap_angle * i as f64 / (c.n_receivers - 1) as f64
            } else {
                0.0
            };
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            let dir = axis * alpha.cos() + (e1 * phi.cos() + e2 * phi.sin()) * alpha.sin();
            dir * cfg.scene.g1_radius
        })
        .collect()
}

fn asymptote_row(label: String, r: &AsymptoteReport) -> AsymptoteRow {
    AsymptoteRow {
        label,
        expected: [r.expected.c.re, r.expected.c.im],
        measured: [r.measured_c.re, r.measured_c.im],
        relative_error: r.relative_error,
        expected_power: r.expected.n,
        measured_power: r.measured_power,
        onset: r.onset,
    }
}

fn distributed_study(
    cfg: &ExperimentConfig,
    dirs: &RunDirs,
    checks: bool,
) -> Result<(RunReport, Vec<ReceiverStudy>)> {
    let t0 = Instant::now();
    let scene = cfg.scene()?;
    let q = cfg.phantom();
    let c = &cfg.ip34;
    let x0 = c.source_direction.normalized() * scene.g1_radius;
    let g = stage("simulate", mollified_source(&scene, x0, c.sigma, c.grid_n))?;
    let gx = &g.exact;
    let points = receivers_on_cap(cfg);
    let field = stage(
        "simulate",
        neumann_volume_source(&q, gx, &points, &cfg.volume_source_options()),
    )?;
    let scat = stage("simulate", scattered_time_field(&field))?;
    let n_k = (c.k_max / c.dk).round() as usize;
    let ks: Vec<f64> = (1..=n_k).map(|i| i as f64 * c.dk).collect();
    let mut report = RunReport::new(
        if checks { "ip34-study" } else { "simulate" },
        cfg.problem,
        cfg.seed,
    );
    let mut studies = Vec::with_capacity(points.len());
    let mut n_leading_zero = 0;

    for (i, p) in points.iter().enumerate() {
        let v = stage("simulate", fourier_bridge(&field.trace(i), &ks))?;
        let vs = stage("simulate", fourier_bridge(&scat.trace(i), &ks))?;
        let rows: Vec<Vec<f64>> = ks
            .iter()
            .zip(v.values.iter().zip(&vs.values))
            .map(|(k, (a, b))| vec![*k, a.norm_sqr(), b.norm_sqr()])
            .collect();
        io::write_csv(
            &dirs.data.join(format!("receiver_{i:02}.csv")),
            "k,f3,f4",
            &rows,
        )?;
        io::write_csv(
            &dirs.data.join(format!("receiver_{i:02}_position.csv")),
            "x,y,z",
            &[vec![p.x, p.y, p.z]],
        )?;
        let sealed: Vec<Vec<f64>> = ks
            .iter()
            .zip(v.values.iter().zip(&vs.values))
            .map(|(k, (a, b))| vec![*k, a.re, a.im, b.re, b.im])
            .collect();
        io::write_csv(
            &dirs.sealed.join(format!("receiver_{i:02}.csv")),
            "k,v_re,v_im,vs_re,vs_im",
            &sealed,
        )?;
        if !checks {
            continue;
        }
        let gv = gx.value(*p);
        let qg = q.value(*p) * gv;
        let total = check_asymptote(&v, AsymptoteKind::Distributed { g: gv }, c.onset)?;
        report
            .asymptotes
            .push(asymptote_row(format!("receiver {i}: k^2 v -> -g"), &total));
        let dt = field.dt;
        let d_v = odd_derivatives_at_zero(&field.values[i], dt);
        let d_s = odd_derivatives_at_zero(&scat.values[i], dt);
        let window = scene.epsilon;
        let kernel2 = ConvolutionKernel {
            dt,
            front_time: 0.0,
            samples: field.values[i].clone(),
            leading_weight: gv,
            deriv_order: 2,
        };
        let order2_lambda = reduce_first_to_second(&kernel2, 2, d_v[1])
            .and_then(|r| uniqueness_mechanism(&r.kernel, None, dt, window))
            .map(|v| v.lambda_sup)
            .ok();
        let leading_zero = !(qg.abs() > LEADING_FLOOR * gv.abs());
        let (scattered, order4_scale, order4_lambda) = if leading_zero {
            n_leading_zero += 1;
            (None, None, None)
        } else {
            let sc = check_asymptote(&vs, AsymptoteKind::DistributedScattered { qg }, c.onset)?;
            report
                .asymptotes
                .push(asymptote_row(format!("receiver {i}: k^4 v_s -> -qg"), &sc));
            let kernel4 = ConvolutionKernel {
                dt,
                front_time: 0.0,
                samples: scat.values[i].clone(),
                leading_weight: -qg,
                deriv_order: 4,
            };
            match reduce_first_to_second(&kernel4, 4, d_s[3]) {
                Ok(r) => {
                    let lam = uniqueness_mechanism(&r.kernel, None, dt, window)
                        .map(|v| v.lambda_sup)
                        .ok();
                    (Some(sc), Some((r.scale, -1.0 / qg)), lam)
                }
                Err(_) => (Some(sc), None, None),
            }
        };
        if let Some((a, b)) = order4_scale {
            report.errors.insert(
                format!("receiver_{i:02}_order4_scale_rel_error"),
                ((a - b) / b).abs(),
            );
        }
        report.errors.insert(
            format!("receiver_{i:02}_order2_leading_rel_error"),
            ((d_v[1] - gv) / gv).abs(),
        );
        studies.push(ReceiverStudy {
            receiver: *p,
            g: gv,
            qg,
            total,
            scattered,
            order2_leading: d_v[1],
            order2_lambda,
            order4_leading: d_s[3],
            order4_scale,
            order4_lambda,
            leading_value_zero: leading_zero,
        });
    }

    let mut st = StageSummary {
        stage: "distributed_simulate".into(),
        n_items: points.len(),
        ..Default::default()
    };
    for (n, v) in field.term_norms.iter().enumerate() {
        st.residuals.insert(format!("term_norm_{n}"), *v);
    }
    report.stages.push(st);
    if checks {
        let worst = studies
            .iter()
            .flat_map(|s| {
                std::iter::once(s.total.relative_error)
                    .chain(s.scattered.as_ref().map(|r| r.relative_error))
            })
            .fold(0.0, f64::max);
        report.flag(
            "distributed_asymptotes_within_5pct",
            6,
            worst <= 0.05,
            format!("worst relative error {worst:.4}"),
        );
        let lam = studies
            .iter()
            .flat_map(|s| [s.order2_lambda, s.order4_lambda])
            .map(|l| l.unwrap_or(f64::INFINITY))
            .filter(|l| l.is_finite())
            .fold(0.0, f64::max);
        report.flag(
            "volterra_lambda_zero_on_S",
            3,
            lam == 0.0,
            format!("max |lambda| = {lam:.3e}"),
        );
        if cfg.problem == 4 || n_leading_zero > 0 {
            report.flag(
                "theorem4_hypothesis_q_nonzero_on_S",
                11,
                n_leading_zero == 0,
                format!(
                    "LeadingValueZero: (qg)(x) vanishes at {n_leading_zero} of {} receivers",
                    points.len()
                ),
            );
        }
        report.note("q is not reconstructed for IP3/IP4: the Carleman step is out of scope");
    }
    report.wall_times.insert("distributed".into(), seconds(t0));
    Ok((report, studies))
}

/// Generates IP3/IP4 data, checks the asymptotes and runs the order-2/order-4 reductions on S.
pub fn run_ip3_ip4_data_study(
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<(RunReport, Vec<ReceiverStudy>)> {
    cfg.validate()?;
    let dirs = RunDirs::new(out);
    dirs.create()?;
    cfg.save(&dirs.data.join("config.toml"))?;
    let (report, studies) = distributed_study(cfg, &dirs, true)?;
    report.write(out, "report")?;
    Ok((report, studies))
}

/// Re-reads a sinogram stage file; used when resuming from `stages/`.
pub fn read_sinogram(out: &Path, s: usize) -> Result<Sinogram> {
    Sinogram::read_csv(&RunDirs::new(out).sinogram(s))
}
