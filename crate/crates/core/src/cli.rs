//! Command-line verbs. Exit codes: 0 success, 1 runtime/data error, 2 config error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::calibration::{DldCalibration, FibreCalibration};
use crate::config::{sha256_hex, Background, RunConfig};
use crate::engine::{accumulate_histograms, build_parallel, rates_report, slice_time_resolved, Histograms, ResolvedBuild};
use crate::error::{Error, Result};
use crate::export::{self, Matrix};
use crate::fit::{fit_peak, fit_peak_xy, PeakFitResult, PeakModel};
use crate::schmidt::{flat_background, jsa_from_intensity, schmidt_decompose, schmidt_report, subtract_background, SchmidtReport};
use crate::simgen::generate;
use crate::spdc::io::{read_jsa, write_jsa};
use crate::spdc::{compute_jsa, FrequencyGrid, GridAxis, JsaGrid};
use crate::tagstream::{self, TimeTag, FORMAT_VERSION};
use crate::units::C_NM_PER_PS;

/// Bundled golden hashes for `--golden`.
pub const GOLDEN_JSON: &str = include_str!("../configs/golden.json");

#[derive(Parser, Debug)]
#[command(name = "biphoton", version, about = "Hybrid biphoton spectrometer pipeline")]
pub struct Cli {
    /// Re-run the bundled default pipeline and compare output hashes against the golden set.
    #[arg(long)]
    pub golden: bool,
    /// With --golden: write the current hashes to this file instead of comparing.
    #[arg(long, requires = "golden", value_name = "PATH")]
    pub bless: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute the JSA, its intensity CSV and the Schmidt report.
    SimulateJsa { config: PathBuf, out: PathBuf },
    /// Synthesise a time-tag stream from a JSA file.
    GenTags { jsa: PathBuf, config: PathBuf, out: PathBuf },
    /// Build events, coincidences and histograms from a stream.
    Build {
        ttag: PathBuf,
        config: PathBuf,
        out: PathBuf,
        #[command(flatten)]
        threads: Threads,
    },
    /// Time-resolved JSI frames by sync offset.
    Slice {
        ttag: PathBuf,
        config: PathBuf,
        out: PathBuf,
        /// Window width, e.g. 150ps, 0.15ns or 150.
        #[arg(long, value_parser = parse_ps)]
        window: Option<f64>,
        /// Offset of the first window; default centres the frames on the IRF peak.
        #[arg(long, value_parser = parse_ps, allow_hyphen_values = true)]
        origin: Option<f64>,
        #[arg(long)]
        frames: Option<usize>,
        #[command(flatten)]
        threads: Threads,
    },
    /// Schmidt analysis and marginal fits of a JSI matrix CSV.
    Analyze {
        jsi: PathBuf,
        /// Calibration and analysis options; defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// none, median, or a constant level.
        #[arg(long)]
        background: Option<String>,
        /// Also write analysis.json and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Copy)]
pub struct Threads {
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

/// Accepts `150`, `150ps`, `0.15ns`, `1us`.
pub fn parse_ps(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let (num, scale) = [("ps", 1.0), ("ns", 1e3), ("us", 1e6), ("µs", 1e6)]
        .iter()
        .find_map(|(u, k)| s.strip_suffix(u).map(|n| (n, *k)))
        .unwrap_or((s, 1.0));
    let v: f64 = num.trim().parse().map_err(|_| format!("{s:?} is not a duration"))?;
    if !v.is_finite() {
        return Err(format!("{s:?} is not finite"));
    }
    Ok(v * scale)
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::SellmeierRange { .. } | Error::MissingLinearizedCoefficients => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> ExitCode {
    let r = if cli.golden {
        golden(cli.bless.as_deref())
    } else {
        match cli.command {
            Some(c) => dispatch(c),
            None => Err(Error::config("no command given; see --help")),
        }
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn dispatch(c: Command) -> Result<()> {
    match c {
        Command::SimulateJsa { config, out } => {
            let summary = cmd_simulate_jsa(&config, &out)?;
            println!(
                "K = {:.4}  P = {:.4}  signal FWHM = {:.4} nm  idler FWHM = {:.4} nm",
                summary.schmidt.schmidt_number,
                summary.schmidt.purity,
                summary.signal_fwhm_nm.unwrap_or(f64::NAN),
                summary.idler_fwhm_nm.unwrap_or(f64::NAN)
            );
        }
        Command::GenTags { jsa, config, out } => {
            let summary = cmd_gen_tags(&jsa, &config, &out)?;
            println!("{} tags, {} pairs ({} fully detected)", summary.tags, summary.pairs, summary.detected_pairs);
        }
        Command::Build { ttag, config, out, threads } => {
            let summary = cmd_build(&ttag, &config, &out, threads.threads)?;
            println!(
                "{} events, {} coincidences ({} in JSI range)",
                summary.diagnostics.events, summary.diagnostics.coincidences, summary.jsi_total
            );
        }
        Command::Slice { ttag, config, out, window, origin, frames, threads } => {
            let args = SliceArgs { window_ps: window, origin_ps: origin, frames };
            let summary = cmd_slice(&ttag, &config, &out, args, threads.threads)?;
            println!("frames {:?}, out of window {}", summary.frame_totals, summary.out_of_window);
        }
        Command::Analyze { jsi, config, background, out } => {
            let r = cmd_analyze(&jsi, config.as_deref(), background.as_deref(), out.as_deref())?;
            print_analysis(&r);
        }
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let mut c = RunConfig::load(path)?;
    c.apply_seed_overrides()?;
    c.validate()?;
    Ok(c)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Output files collected in a hidden sibling directory and moved into place on success.
struct Staging {
    dir: PathBuf,
    target: PathBuf,
    files: Vec<String>,
    done: bool,
}

impl Staging {
    fn new(target: &Path) -> Result<Self> {
        let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{}: parent directory does not exist", target.display()),
            )));
        }
        if target.exists() && !target.is_dir() {
            return Err(Error::data(format!("{} exists and is not a directory", target.display())));
        }
        let dir = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self { dir, target: target.to_path_buf(), files: Vec::new(), done: false })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, v)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn commit(mut self, manifest: Manifest) -> Result<Vec<PathBuf>> {
        let mut m = manifest;
        for f in &self.files {
            let p = self.dir.join(f);
            m.outputs.push(OutputEntry { file: f.clone(), sha256: file_hash(&p)?, bytes: fs::metadata(&p)?.len() });
        }
        self.json("manifest.json", &m)?;
        fs::create_dir_all(&self.target)?;
        let mut out = Vec::new();
        for f in &self.files {
            let dst = self.target.join(f);
            fs::rename(self.dir.join(f), &dst)?;
            out.push(dst);
        }
        fs::remove_dir_all(&self.dir)?;
        self.done = true;
        Ok(out)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

#[derive(Serialize)]
struct InputEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    formats: Value,
    command: String,
    config_hash: Option<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    inputs: Vec<InputEntry>,
    outputs: Vec<OutputEntry>,
}

impl Manifest {
    fn new(command: &str, cfg: Option<&RunConfig>, inputs: &[&Path]) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| Ok(InputEntry { path: p.display().to_string(), sha256: file_hash(p)? }))
            .collect::<Result<_>>()?;
        Ok(Self {
            tool: "biphoton",
            version: env!("CARGO_PKG_VERSION"),
            formats: json!({"ttag": FORMAT_VERSION, "jsa": crate::spdc::io::JSA_VERSION}),
            command: command.into(),
            config_hash: cfg.map(RunConfig::hash),
            seed: cfg.map(|c| c.acquisition.seed),
            threads: None,
            inputs,
            outputs: Vec::new(),
        })
    }
}

fn meta(cfg: &RunConfig, kind: &str) -> Value {
    json!({"kind": kind, "config_hash": cfg.hash()})
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateSummary {
    pub schmidt: SchmidtReport,
    pub signal_fwhm_nm: Option<f64>,
    pub idler_fwhm_nm: Option<f64>,
    pub grid: FrequencyGrid,
}

pub fn cmd_simulate_jsa(config: &Path, out: &Path) -> Result<SimulateSummary> {
    let cfg = load_config(config)?;
    let grid = FrequencyGrid::from_spec(&cfg.grid)?;
    let jsa = compute_jsa(&cfg.pump, &cfg.crystal, &grid)?;
    let modes = cfg.analysis.modes;
    let (schmidt, m) = if modes > 0 {
        let (r, m) = schmidt_decompose(&jsa, Some(modes))?;
        (r, Some(m))
    } else {
        (schmidt_report(&jsa)?, None)
    };
    let summary =
        SimulateSummary { schmidt, signal_fwhm_nm: jsa.signal_fwhm_nm(), idler_fwhm_nm: jsa.idler_fwhm_nm(), grid };
    let mut st = Staging::new(out)?;
    st.write_with("jsa.bin", |w| write_jsa(&jsa, w).map(|_| ()))?;
    st.write_with("jsi.csv", |w| export::write_jsa_intensity(w, &jsa, meta(&cfg, "jsi")))?;
    st.write_with("jsi_signal_axis.csv", |w| export::write_grid_axis(w, &grid.signal))?;
    st.write_with("jsi_idler_axis.csv", |w| export::write_grid_axis(w, &grid.idler))?;
    if let Some(m) = m {
        st.write_with("schmidt_modes.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            let e = |e: csv::Error| Error::data(e.to_string());
            c.write_record(["arm", "mode", "index", "re", "im"]).map_err(e)?;
            for (arm, set) in [("signal", &m.signal), ("idler", &m.idler)] {
                for (j, v) in set.iter().enumerate() {
                    for (k, z) in v.iter().enumerate() {
                        c.write_record([arm, &j.to_string(), &k.to_string(), &z.re.to_string(), &z.im.to_string()])
                            .map_err(e)?;
                    }
                }
            }
            c.flush()?;
            Ok(())
        })?;
    }
    st.json("schmidt.json", &summary)?;
    st.commit(Manifest::new("simulate-jsa", Some(&cfg), &[config])?)?;
    Ok(summary)
}

fn read_jsa_file(path: &Path) -> Result<JsaGrid> {
    read_jsa(BufReader::new(open(path)?))
}

fn read_tags(path: &Path) -> Result<(tagstream::StreamHeader, Vec<TimeTag>)> {
    tagstream::read_all(BufReader::new(open(path)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct GenSummary {
    pub tags: usize,
    pub pairs: usize,
    pub detected_pairs: usize,
    pub sync_tags: u64,
    pub dark_dld_assemblies: u64,
    pub dark_snspd: u64,
    pub dead_time_dropped: u64,
}

pub fn cmd_gen_tags(jsa_path: &Path, config: &Path, out: &Path) -> Result<GenSummary> {
    let cfg = load_config(config)?;
    let jsa = read_jsa_file(jsa_path)?;
    let (tags, truth) = generate(&jsa, &cfg.acquisition)?;
    let summary = GenSummary {
        tags: tags.len(),
        pairs: truth.pairs.len(),
        detected_pairs: truth.detected_pairs(),
        sync_tags: truth.sync_tags,
        dark_dld_assemblies: truth.dark_dld_assemblies,
        dark_snspd: truth.dark_snspd,
        dead_time_dropped: truth.dead_time_dropped,
    };
    let mut st = Staging::new(out)?;
    st.write_with("tags.ttag", |w| tagstream::write_stream(&cfg.acquisition.header().with_record_count(tags.len() as u64), &tags, w).map(|_| ()))?;
    st.write_with("truth.jsonl", |w| {
        serde_json::to_writer(&mut *w, &summary)?;
        writeln!(w)?;
        for p in &truth.pairs {
            serde_json::to_writer(&mut *w, p)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    st.commit(Manifest::new("gen-tags", Some(&cfg), &[jsa_path, config])?)?;
    Ok(summary)
}

fn signal_nm(cal: DldCalibration) -> impl Fn(f64) -> f64 {
    move |ps| cal.wavelength_from_dt_ps(ps)
}

fn idler_nm(cal: FibreCalibration) -> impl Fn(f64) -> f64 {
    move |ps| cal.wavelength_from_delay_ps(ps)
}

#[derive(Clone, Debug, Serialize)]
pub struct Fits {
    pub irf_gaussian: PeakFitResult,
    pub signal_gaussian: PeakFitResult,
    pub idler_sinc_squared: PeakFitResult,
}

fn fits(h: &Histograms, cfg: &RunConfig) -> Fits {
    let o = &cfg.analysis.fit;
    Fits {
        irf_gaussian: fit_peak(&h.irf, PeakModel::Gaussian, o),
        signal_gaussian: fit_peak(&h.signal_spectrum, PeakModel::Gaussian, o),
        idler_sinc_squared: fit_peak(&h.idler_spectrum, PeakModel::SincSquared, o),
    }
}

fn build_stream(ttag: &Path, cfg: &RunConfig, threads: usize) -> Result<(ResolvedBuild, crate::engine::BuildOutput, f64)> {
    let (header, tags) = read_tags(ttag)?;
    let r = cfg.build.resolve(&header)?;
    let out = build_parallel(&tags, &r, threads)?;
    let span = match (tags.first(), tags.last()) {
        (Some(a), Some(b)) => (b.timestamp - a.timestamp) as f64 * header.tick_ps as f64 * 1e-12,
        _ => 0.0,
    };
    Ok((r, out, span))
}

#[derive(Clone, Debug, Serialize)]
pub struct BuildSummary {
    pub diagnostics: crate::engine::Diagnostics,
    pub rates: Option<crate::engine::RatesReport>,
    pub fits: Fits,
    pub jsi_total: u64,
}

pub fn cmd_build(ttag: &Path, config: &Path, out: &Path, threads: usize) -> Result<BuildSummary> {
    let cfg = load_config(config)?;
    let (r, built, span) = build_stream(ttag, &cfg, threads)?;
    let h = accumulate_histograms(&built.coincidences, &built.events, &r);
    let summary = BuildSummary {
        diagnostics: built.diagnostics.clone(),
        rates: rates_report(&built, &r.channels, span).ok(),
        fits: fits(&h, &cfg),
        jsi_total: h.jsi.in_range(),
    };
    let s_nm = signal_nm(cfg.acquisition.dld);
    let i_nm = idler_nm(cfg.acquisition.fibre);
    let mut st = Staging::new(out)?;
    st.write_with("irf.csv", |w| export::write_hist1d(w, &h.irf, meta(&cfg, "irf"), None))?;
    st.write_with("signal_spectrum.csv", |w| {
        export::write_hist1d(w, &h.signal_spectrum, meta(&cfg, "signal_spectrum"), Some(&s_nm))
    })?;
    st.write_with("idler_spectrum.csv", |w| {
        export::write_hist1d(w, &h.idler_spectrum, meta(&cfg, "idler_spectrum"), Some(&i_nm))
    })?;
    st.write_with("dt_y.csv", |w| export::write_hist1d(w, &h.dt_y, meta(&cfg, "dt_y"), None))?;
    st.write_with("jsi.csv", |w| export::write_jsi(w, &h.jsi, meta(&cfg, "jsi")))?;
    st.write_with("jsi_signal_axis.csv", |w| export::write_bin_axis(w, &h.jsi.signal, Some(&s_nm)))?;
    st.write_with("jsi_idler_axis.csv", |w| export::write_bin_axis(w, &h.jsi.idler, Some(&i_nm)))?;
    st.json("diagnostics.json", &summary)?;
    let mut m = Manifest::new("build", Some(&cfg), &[ttag, config])?;
    m.threads = Some(threads);
    st.commit(m)?;
    Ok(summary)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SliceArgs {
    pub window_ps: Option<f64>,
    pub origin_ps: Option<f64>,
    pub frames: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SliceSummary {
    pub window_ticks: i64,
    pub origin_ticks: i64,
    pub frame_totals: Vec<u64>,
    pub out_of_window: u64,
    pub irf_fit: PeakFitResult,
}

pub fn cmd_slice(ttag: &Path, config: &Path, out: &Path, args: SliceArgs, threads: usize) -> Result<SliceSummary> {
    let mut cfg = load_config(config)?;
    if let Some(w) = args.window_ps {
        cfg.slice.window_ps = w;
    }
    if args.origin_ps.is_some() {
        cfg.slice.origin_ps = args.origin_ps;
    }
    if let Some(f) = args.frames {
        cfg.slice.frames = f;
    }
    cfg.validate()?;
    let (r, built, _) = build_stream(ttag, &cfg, threads)?;
    let tick = r.tick_ps as f64;
    let width = (cfg.slice.window_ps / tick).round() as i64;
    let h = accumulate_histograms(&[], &built.events, &r);
    let irf_fit = fit_peak(&h.irf, PeakModel::Gaussian, &cfg.analysis.fit);
    let origin = match cfg.slice.origin_ps {
        Some(o) => (o / tick).round() as i64,
        None if irf_fit.converged => (irf_fit.center / tick - 0.5 * (width * cfg.slice.frames as i64) as f64).round() as i64,
        None => return Err(Error::data("IRF fit failed; pass --origin")),
    };
    let s = slice_time_resolved(&built.coincidences, &r, width, origin, cfg.slice.frames)?;
    let summary = SliceSummary {
        window_ticks: width,
        origin_ticks: origin,
        frame_totals: s.frame_totals(),
        out_of_window: s.out_of_window.in_range() + s.out_of_window.out_of_range,
        irf_fit,
    };
    let mut st = Staging::new(out)?;
    let digits = (cfg.slice.frames.max(2) - 1).to_string().len();
    for (k, f) in s.frames.iter().enumerate() {
        let mut m = meta(&cfg, "jsi_frame");
        m["frame"] = json!(k);
        m["offset_lo_tick"] = json!(origin + k as i64 * width);
        m["offset_hi_tick"] = json!(origin + (k as i64 + 1) * width - 1);
        st.write_with(&format!("frame_{k:0digits$}.csv"), |w| export::write_jsi(w, f, m))?;
    }
    st.write_with("out_of_window.csv", |w| export::write_jsi(w, &s.out_of_window, meta(&cfg, "jsi_out_of_window")))?;
    st.json("slices.json", &summary)?;
    let mut m = Manifest::new("slice", Some(&cfg), &[ttag, config])?;
    m.threads = Some(threads);
    st.commit(m)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct MarginalFit {
    pub fit: PeakFitResult,
    pub unit: String,
    pub fwhm_nm: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisSummary {
    pub schmidt: SchmidtReport,
    pub background_level: f64,
    /// Before subtraction, when a non-zero level was removed.
    pub schmidt_unsubtracted: Option<SchmidtReport>,
    pub signal: MarginalFit,
    pub idler: MarginalFit,
}

enum AxisKind {
    Ticks,
    Omega,
    Index,
}

/// Axis from a JSI header: histogram bins (ps), frequency grid (rad/ps) or plain indices.
fn axis_from_meta(meta: Option<&Value>, key: &str, len: usize) -> Result<(GridAxis, AxisKind)> {
    let v = meta.and_then(|m| m.get(key));
    if let Some(b) = v.and_then(|v| serde_json::from_value::<crate::histogram::BinAxis>(v.clone()).ok()) {
        if b.bins != len {
            return Err(Error::data(format!("{key} declares {} bins, matrix has {len}", b.bins)));
        }
        return Ok((GridAxis { start: b.center_ps(0), step: b.width_ps(), len }, AxisKind::Ticks));
    }
    if let Some(v) = v {
        let f = |k: &str| v.get(k).and_then(Value::as_f64);
        if let (Some(start), Some(step)) = (f("start"), f("step")) {
            if f("len").map_or(false, |l| l as usize != len) {
                return Err(Error::data(format!("{key} length differs from the matrix")));
            }
            return Ok((GridAxis { start, step, len }, AxisKind::Omega));
        }
    }
    Ok((GridAxis { start: 0.0, step: 1.0, len }, AxisKind::Index))
}

fn parse_background(s: &str) -> Result<Background> {
    match s.trim() {
        "none" => Ok(Background::None),
        "median" => Ok(Background::Median),
        v => v
            .parse::<f64>()
            .ok()
            .filter(|l| *l >= 0.0 && l.is_finite())
            .map(|level| Background::Constant { level })
            .ok_or_else(|| Error::config(format!("background {v:?}: expected none, median or a level >= 0"))),
    }
}

pub fn analyze_matrix(m: &Matrix, cfg: &RunConfig) -> Result<AnalysisSummary> {
    if m.values.iter().any(|v| *v < 0.0) {
        return Err(Error::data("JSI entries must be >= 0"));
    }
    let (sa, sk) = axis_from_meta(m.meta.as_ref(), "signal_axis", m.rows)?;
    let (ia, ik) = axis_from_meta(m.meta.as_ref(), "idler_axis", m.cols)?;
    let level = match cfg.analysis.background {
        Background::None => 0.0,
        Background::Median => flat_background(&m.values),
        Background::Constant { level } => level,
    };
    let intensity = subtract_background(&m.values, level);
    let jsa = jsa_from_intensity(&intensity, FrequencyGrid { signal: sa, idler: ia })?;
    let schmidt = schmidt_report(&jsa)?;
    let schmidt_unsubtracted = if level > 0.0 {
        Some(schmidt_report(&jsa_from_intensity(&m.values, FrequencyGrid { signal: sa, idler: ia })?)?)
    } else {
        None
    };
    let marg = |axis: &GridAxis, marginal: Vec<f64>, model, kind: &AxisKind, nm: &dyn Fn(f64, f64) -> f64| {
        let x: Vec<f64> = (0..axis.len).map(|k| axis.omega(k)).collect();
        let fit = fit_peak_xy(&x, &marginal, model, &cfg.analysis.fit);
        let (unit, fwhm_nm) = match kind {
            AxisKind::Ticks => ("ps", fit.converged.then(|| nm(fit.center, fit.fwhm))),
            AxisKind::Omega => {
                ("rad/ps", fit.converged.then(|| 2.0 * std::f64::consts::PI * C_NM_PER_PS * fit.fwhm / fit.center.powi(2)))
            }
            AxisKind::Index => ("bin", None),
        };
        MarginalFit { fit, unit: unit.into(), fwhm_nm }
    };
    let dld = cfg.acquisition.dld;
    let fibre = cfg.acquisition.fibre;
    Ok(AnalysisSummary {
        background_level: level,
        schmidt_unsubtracted,
        signal: marg(&sa, jsa.signal_marginal(), PeakModel::Gaussian, &sk, &|_, w| w * dld.nm_per_ps().abs()),
        idler: marg(&ia, jsa.idler_marginal(), PeakModel::SincSquared, &ik, &|_, w| {
            w / fibre.dispersion_ps_per_nm.abs()
        }),
        schmidt,
    })
}

pub fn cmd_analyze(jsi: &Path, config: Option<&Path>, background: Option<&str>, out: Option<&Path>) -> Result<AnalysisSummary> {
    let mut cfg = match config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(b) = background {
        cfg.analysis.background = parse_background(b)?;
    }
    let m = export::read_matrix(BufReader::new(open(jsi)?))?;
    let r = analyze_matrix(&m, &cfg)?;
    if let Some(out) = out {
        let mut st = Staging::new(out)?;
        st.json("analysis.json", &r)?;
        let mut inputs = vec![jsi];
        inputs.extend(config);
        st.commit(Manifest::new("analyze", Some(&cfg), &inputs)?)?;
    }
    Ok(r)
}

fn print_analysis(r: &AnalysisSummary) {
    println!("K = {:.4}", r.schmidt.schmidt_number);
    println!("P = {:.4}", r.schmidt.purity);
    if let Some(raw) = &r.schmidt_unsubtracted {
        println!("background {:.4} removed; before subtraction K = {:.4}, P = {:.4}", r.background_level, raw.schmidt_number, raw.purity);
    }
    for (name, m) in [("signal", &r.signal), ("idler", &r.idler)] {
        match m.fwhm_nm {
            Some(nm) => println!("{name} FWHM = {:.6} {} ({:.4} nm)", m.fit.fwhm, m.unit, nm),
            None => println!("{name} FWHM = {:.6} {}", m.fit.fwhm, m.unit),
        }
    }
}

/// Runs simulate-jsa → gen-tags → build → slice on the bundled config in `dir`
/// and returns the sha256 of every non-manifest output.
pub fn golden_hashes(dir: &Path) -> Result<Vec<(String, String)>> {
    let cfg_path = dir.join("default.json");
    fs::write(&cfg_path, crate::config::DEFAULT_JSON)?;
    let jsa_dir = dir.join("jsa");
    let tag_dir = dir.join("tags");
    let build_dir = dir.join("build");
    let slice_dir = dir.join("slice");
    cmd_simulate_jsa(&cfg_path, &jsa_dir)?;
    cmd_gen_tags(&jsa_dir.join("jsa.bin"), &cfg_path, &tag_dir)?;
    cmd_build(&tag_dir.join("tags.ttag"), &cfg_path, &build_dir, 0)?;
    cmd_slice(&tag_dir.join("tags.ttag"), &cfg_path, &slice_dir, SliceArgs::default(), 0)?;
    let mut out = Vec::new();
    for d in [&jsa_dir, &tag_dir, &build_dir, &slice_dir] {
        let mut names: Vec<String> = fs::read_dir(d)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        for n in names.into_iter().filter(|n| n != "manifest.json") {
            let rel = format!("{}/{n}", d.file_name().unwrap().to_string_lossy());
            out.push((rel, file_hash(&d.join(&n))?));
        }
    }
    Ok(out)
}

fn golden(bless: Option<&Path>) -> Result<()> {
    if std::env::var(crate::config::SEED_ENV).is_ok() {
        return Err(Error::config("unset BIPHOTON_SEED to compare against golden hashes"));
    }
    let dir = std::env::temp_dir().join(format!("biphoton-golden-{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    let hashes = golden_hashes(&dir);
    let _ = fs::remove_dir_all(&dir);
    let hashes = hashes?;
    let current: serde_json::Map<String, Value> = hashes.into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    if let Some(p) = bless {
        fs::write(p, serde_json::to_string_pretty(&current)? + "\n")?;
        println!("wrote {} hashes to {}", current.len(), p.display());
        return Ok(());
    }
    let expected: serde_json::Map<String, Value> = serde_json::from_str(GOLDEN_JSON)?;
    let mut bad = 0;
    for (k, v) in &expected {
        match current.get(k) {
            Some(c) if c == v => println!("ok       {k}"),
            Some(_) => {
                bad += 1;
                println!("DIFFERS  {k}");
            }
            None => {
                bad += 1;
                println!("MISSING  {k}");
            }
        }
    }
    for k in current.keys().filter(|k| !expected.contains_key(*k)) {
        bad += 1;
        println!("NEW      {k}");
    }
    if bad > 0 {
        return Err(Error::data(format!("{bad} golden output(s) differ")));
    }
    println!("all {} golden outputs match", expected.len());
    Ok(())
}
