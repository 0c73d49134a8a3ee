//! The three subcommands. Each writes its artefacts under the output
//! directory and returns a plain-text report for the terminal.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tomo2d::export::{self, write_atomic};
use tomo2d::spectral::{cross_section, dft_1d, dft_t1, dft_t2, ProcessingParams};
use tomo2d::tomography::{
    build_design_matrix_unchecked, invert, reference_scale, DesignSpec, TomographyOptions,
};
use tomo2d::{
    run_reference, run_sequence_a, run_sequence_b, transition_table, AcquisitionParams,
    DesignMatrix, DeviationDensityMatrix, Signal1D, Signal2D, SpinSystem, TomographyResult,
};

use crate::config::RunConfig;
use crate::CliError;

/// Largest design matrix also dumped as CSV.
const DESIGN_CSV_MAX_ENTRIES: usize = 1_000_000;
/// Points kept per axis of the 2D magnitude grid.
const SPECTRUM_GRID_MAX: usize = 512;

pub const DESIGN_CACHE_FILE: &str = "design.bin";

struct Setup {
    sys: SpinSystem,
    params: AcquisitionParams,
    opts: TomographyOptions,
    processing: ProcessingParams,
    rho: DeviationDensityMatrix,
}

impl Setup {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let sys = cfg.spin_system()?;
        let params = cfg.acquisition(&sys)?;
        let opts = TomographyOptions {
            select_spins: cfg.select_spins(),
            normalize: cfg.options.normalize,
            ..Default::default()
        };
        let processing = opts.processing_for(&sys);
        let rho = cfg.density()?;
        Ok(Setup {
            sys,
            params,
            opts,
            processing,
            rho,
        })
    }
}

struct Signals {
    a: Signal2D,
    b: Signal1D,
    reference: Signal1D,
}

fn add_noise(data: &mut [Complex64], dist: &Normal<f64>, rng: &mut ChaCha8Rng) {
    for z in data {
        z.re += dist.sample(rng);
        z.im += dist.sample(rng);
    }
}

fn simulate_signals(cfg: &RunConfig, s: &Setup) -> Result<Signals, CliError> {
    let mut a = run_sequence_a(&s.sys, &s.rho, &s.params)?;
    let mut b = run_sequence_b(&s.sys, &s.rho, &s.params)?;
    let mut reference = run_reference(&s.sys, &s.rho, &s.params)?;
    let rms = cfg.options.noise_rms;
    if rms > 0.0 {
        // complex noise of the given rms magnitude
        let dist = Normal::new(0.0, rms / 2f64.sqrt())
            .map_err(|e| CliError::Config(format!("options.noise_rms: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.options.seed);
        add_noise(a.data_mut(), &dist, &mut rng);
        add_noise(b.data_mut(), &dist, &mut rng);
        add_noise(reference.data_mut(), &dist, &mut rng);
    }
    Ok(Signals { a, b, reference })
}

struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", parent.display())))?;
        }
        write_atomic(&path, bytes)?;
        log::debug!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
        self.put(name, text.as_bytes())
    }
}

fn write_signals(w: &mut Writer, s: &Setup, sig: &Signals) -> Result<(), CliError> {
    w.put("signal_a.csv", export::signal2d_csv(&sig.a).as_bytes())?;
    w.json("signal_a.json", &export::signal2d_sidecar(&sig.a))?;
    w.put("signal_b.csv", export::signal1d_csv(&sig.b).as_bytes())?;
    w.json("signal_b.json", &export::signal1d_sidecar(&sig.b))?;
    w.put(
        "reference.csv",
        export::signal1d_csv(&sig.reference).as_bytes(),
    )?;
    w.json("reference.json", &export::signal1d_sidecar(&sig.reference))?;

    let hybrid = dft_t2(&sig.a, &s.processing);
    let spec2d = dft_t1(&hybrid, &ProcessingParams::matched(s.sys.t2_s()));
    let longest = spec2d.omega1_hz.len().max(spec2d.omega2_hz.len());
    let stride = longest.div_ceil(SPECTRUM_GRID_MAX).max(1);
    w.put(
        "spectrum_2d_magnitude.csv",
        export::spectrum2d_magnitude_csv(&spec2d, stride).as_bytes(),
    )?;
    w.json("spectrum_2d_axes.json", &export::spectrum2d_axes(&spec2d))?;
    w.put(
        "spectrum_b.csv",
        export::spectrum1d_csv(&dft_1d(&sig.b, &s.processing)).as_bytes(),
    )?;
    w.put(
        "spectrum_reference.csv",
        export::spectrum1d_csv(&dft_1d(&sig.reference, &s.processing)).as_bytes(),
    )?;
    let table = transition_table(&s.sys)?;
    for t in table.entries() {
        let c = cross_section(&hybrid, &spec2d, t.freq_hz)?;
        let name = format!(
            "cross_sections/q{}_{}-{}.csv",
            t.qubit + 1,
            t.lower,
            t.upper
        );
        w.put(&name, export::cross_section_csv(&c).as_bytes())?;
    }
    Ok(())
}

/// Loads the cached design from `dir` when its key matches, else builds it
/// and refreshes the cache. Returns the matrix, any rank error and whether
/// the cache was used.
fn design_for(
    s: &Setup,
    dir: &Path,
) -> Result<(DesignMatrix, Option<tomo2d::Error>, bool), CliError> {
    let selected = s.opts.selected_transitions(&s.sys)?;
    let spec = DesignSpec::new(&s.sys, &s.params, &s.processing, &selected);
    let path = dir.join(DESIGN_CACHE_FILE);
    if path.exists() {
        match export::load_design(&path, &spec) {
            Ok(d) => {
                log::info!("design cache hit: {} (key {})", path.display(), d.key());
                let err = if d.condition_number().is_finite() {
                    None
                } else {
                    DesignMatrix::from_parts_unchecked(d.spec().clone(), d.matrix().clone()).1
                };
                return Ok((d, err, true));
            }
            Err(e) => log::info!("design cache not usable ({e}); rebuilding"),
        }
    }
    let (d, err) = build_design_matrix_unchecked(&s.sys, &s.params, &s.processing, &selected)?;
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    export::save_design(&path, &d)?;
    log::info!("design cache written: {}", path.display());
    Ok((d, err, false))
}

fn header(cfg: &RunConfig, s: &Setup, command: &str) -> String {
    let p = &s.params;
    let mut out = format!("tomo2d {command}\n");
    let _ = writeln!(
        out,
        "system: {} spins, larmor {:?} Hz, T2 {} s",
        s.sys.n_spins(),
        s.sys.larmor_hz(),
        s.sys.t2_s()
    );
    for c in &cfg.system.couplings_hz {
        let _ = writeln!(out, "  J{}{} = {} Hz", c.spins[0], c.spins[1], c.hz);
    }
    let _ = writeln!(
        out,
        "acquisition: {} x {} samples, dwell {:.4e} s (t1) / {:.4e} s (t2), alpha {:.2} deg, beta {:.2} deg",
        p.n_t1,
        p.n_t2,
        p.dwell_t1_s,
        p.dwell_t2_s,
        p.alpha_rad.to_degrees(),
        p.beta_rad.to_degrees()
    );
    if cfg.options.noise_rms > 0.0 {
        let _ = writeln!(
            out,
            "noise: rms {} (seed {})",
            cfg.options.noise_rms, cfg.options.seed
        );
    }
    if cfg.options.realistic_gradient {
        let _ = writeln!(out, "gradient: zero-quantum coherences partly survive");
    }
    out
}

fn fmt_c(z: Complex64) -> String {
    format!("{:+.5}{:+.5}i", z.re, z.im)
}

fn matrix_table(input: &DeviationDensityMatrix, result: &TomographyResult) -> String {
    let mut out = format!(
        "{:>4} {:>4}  {:>24}  {:>24}  {:>11}\n",
        "row", "col", "input", "reconstructed", "|error|"
    );
    let dim = input.dim();
    for r in 0..dim {
        for c in 0..dim {
            let a = input.get(r, c);
            let b = result.matrix.get(r, c);
            let _ = writeln!(
                out,
                "{:>4} {:>4}  {:>24}  {:>24}  {:>11.3e}",
                r,
                c,
                fmt_c(a),
                fmt_c(b),
                (b - a).norm()
            );
        }
    }
    out
}

/// Runs the sequences and writes signals, spectra and cross-sections.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let s = Setup::new(cfg)?;
    let sig = simulate_signals(cfg, &s)?;
    let mut w = Writer::new(out)?;
    write_signals(&mut w, &s, &sig)?;
    let mut report = header(cfg, &s, "simulate");
    let _ = writeln!(report, "transitions:");
    for t in transition_table(&s.sys)?.entries() {
        let _ = writeln!(
            report,
            "  spin {} |{}> <-> |{}>: {:.4} Hz",
            t.qubit + 1,
            t.lower,
            t.upper,
            t.freq_hz
        );
    }
    let _ = writeln!(report, "{} files in {}", w.written.len(), out.display());
    w.put("report.txt", report.as_bytes())?;
    Ok(report)
}

/// Simulates, inverts and scores.
pub fn tomograph(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let s = Setup::new(cfg)?;
    let sig = simulate_signals(cfg, &s)?;
    let mut w = Writer::new(out)?;
    write_signals(&mut w, &s, &sig)?;

    let (design, err, hit) = design_for(&s, out)?;
    if let Some(e) = err {
        return Err(e.into());
    }
    let mut result = invert(&design, &sig.a, &sig.b, &s.params, &s.opts)?;
    if s.opts.normalize {
        match reference_scale(
            &s.sys,
            &sig.reference,
            &result.matrix,
            &s.processing,
            s.opts.readout,
        )? {
            Some(f) => result = result.scaled(f),
            None => log::info!("reference normalization skipped: no observable content"),
        }
    }
    let result = result.compare_with(&s.rho)?;
    w.put("result.json", export::result_json(&result)?.as_bytes())?;

    let mut report = header(cfg, &s, "tomograph");
    let _ = writeln!(
        report,
        "design: {} x {} (condition {:.4e}){}",
        design.matrix().nrows(),
        design.matrix().ncols(),
        design.condition_number(),
        if hit { ", from cache" } else { "" }
    );
    let _ = writeln!(
        report,
        "off-diagonal fit: relative residual {:.3e}, condition {:.4e}",
        result.relative_residual, result.condition_number
    );
    let _ = writeln!(
        report,
        "diagonal fit: residual {:.3e}, condition {:.4e}",
        result.diagonal_residual_norm, result.diagonal_condition_number
    );
    if let Some(f) = result.scale_factor {
        let _ = writeln!(report, "reference scale factor: {f:.6}");
    }
    match result.max_relative_error {
        Some(e) => {
            let _ = writeln!(
                report,
                "max relative element error: {:.4e} ({:.4}%)",
                e,
                100.0 * e
            );
        }
        None => {
            let _ = writeln!(report, "max relative element error: n/a");
        }
    }
    match result.fidelity {
        Some(f) => {
            let _ = writeln!(report, "fidelity: {f:.6}");
        }
        None => {
            let _ = writeln!(
                report,
                "fidelity: skipped (input or reconstruction is the zero matrix)"
            );
        }
    }
    report.push('\n');
    report.push_str(&matrix_table(&s.rho, &result));
    w.put("report.txt", report.as_bytes())?;
    Ok(report)
}

#[derive(serde::Serialize)]
struct BasisSummary<'a> {
    key: String,
    rows: usize,
    columns: usize,
    labels: Vec<String>,
    transitions_hz: Vec<f64>,
    condition_number: Option<f64>,
    rank: Option<usize>,
    null_labels: &'a [String],
}

/// Writes the design matrix, its cache file and a summary.
pub fn basis(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let s = Setup::new(cfg)?;
    let (design, err, hit) = design_for(&s, out)?;
    let mut w = Writer::new(out)?;
    let (rows, cols) = design.matrix().shape();
    if rows * cols <= DESIGN_CSV_MAX_ENTRIES {
        w.put("design.csv", export::design_csv(&design).as_bytes())?;
    } else {
        log::info!("design.csv skipped: {rows} x {cols} exceeds {DESIGN_CSV_MAX_ENTRIES} entries");
    }
    let (rank, null_labels) = match &err {
        Some(tomo2d::Error::RankDeficient {
            rank, null_labels, ..
        }) => (Some(*rank), null_labels.clone()),
        _ => (None, Vec::new()),
    };
    let summary = BasisSummary {
        key: design.key(),
        rows,
        columns: cols,
        labels: design.label_names(),
        transitions_hz: design.transitions().iter().map(|t| t.freq_hz).collect(),
        condition_number: Some(design.condition_number()).filter(|c| c.is_finite()),
        rank: rank.or(Some(cols)),
        null_labels: &null_labels,
    };
    w.json("basis.json", &summary)?;

    let mut report = header(cfg, &s, "basis");
    let _ = writeln!(
        report,
        "design: {rows} rows x {cols} columns, key {}{}",
        design.key(),
        if hit { " (cache hit)" } else { "" }
    );
    let _ = writeln!(report, "columns: {}", design.label_names().join(", "));
    match &err {
        None => {
            let _ = writeln!(
                report,
                "condition number: {:.6e}",
                design.condition_number()
            );
        }
        Some(e) => {
            let _ = writeln!(report, "{e}");
        }
    }
    w.put("basis_report.txt", report.as_bytes())?;
    match err {
        None => Ok(report),
        Some(e) => Err(CliError::Rank {
            message: e.to_string(),
            report,
        }),
    }
}
