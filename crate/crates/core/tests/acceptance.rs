use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use biphoton::calibration::{dld_position, idler_wavelength};
use biphoton::cli::{cmd_analyze, cmd_build, cmd_gen_tags, cmd_simulate_jsa};
use biphoton::config::{sha256_hex, RunConfig};
use biphoton::engine::{
    accumulate_histograms, build, build_parallel, rates_report, slice_time_resolved, BuildOutput, ResolvedBuild,
};
use biphoton::export::{read_matrix, write_jsi};
use biphoton::fit::{fit_peak, fit_peak_xy, FitOptions, FitParams, PeakModel};
use biphoton::schmidt::schmidt_report;
use biphoton::simgen::{generate, AcquisitionConfig};
use biphoton::spdc::io::read_jsa;
use biphoton::spdc::{compute_jsa, CrystalSpec, FrequencyGrid, GridAxis, JsaGrid};
use biphoton::tagstream::read_all;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn within(got: f64, want: f64, rel: f64) -> bool {
    (got / want - 1.0).abs() <= rel
}

fn random_smooth_jsa(rng: &mut ChaCha8Rng) -> JsaGrid {
    let ns = rng.random_range(12..64);
    let ni = rng.random_range(12..64);
    let grid = FrequencyGrid {
        signal: GridAxis { start: 3.6, step: 1e-3, len: ns },
        idler: GridAxis { start: 1.2, step: 2e-3, len: ni },
    };
    let rank = rng.random_range(1..=8);
    let mut a = vec![Complex64::new(0.0, 0.0); ns * ni];
    for _ in 0..rank {
        let c = Complex64::from_polar(rng.random_range(0.1..1.0), rng.random_range(0.0..2.0 * PI));
        let bump = |rng: &mut ChaCha8Rng, n: usize| {
            let mu = rng.random_range(0.0..n as f64);
            let sigma = rng.random_range(2.0..n as f64 / 2.0);
            let k = rng.random_range(-0.3..0.3);
            (0..n)
                .map(|j| {
                    let u = (j as f64 - mu) / sigma;
                    Complex64::from_polar((-0.5 * u * u).exp(), k * j as f64)
                })
                .collect::<Vec<_>>()
        };
        let g = bump(rng, ns);
        let h = bump(rng, ni);
        for s in 0..ns {
            for i in 0..ni {
                a[s * ni + i] += c * g[s] * h[i];
            }
        }
    }
    JsaGrid::new(grid, a).unwrap()
}

fn schmidt_identity() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut kp, mut norm) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let r = schmidt_report(&random_smooth_jsa(&mut rng)).map_err(err)?;
        kp = kp.max((r.schmidt_number * r.purity - 1.0).abs());
        norm = norm.max((r.eigenvalues.iter().map(|l| l * l).sum::<f64>() - 1.0).abs());
    }
    let el = t.elapsed();
    Ok((
        kp < 1e-9 && norm < 1e-9 && el < Duration::from_secs(10),
        format!("100 JSAs, max |KP-1| = {kp:.1e}, max |sum l^2 - 1| = {norm:.1e} (tol 1e-9), {} (limit 10 s)", secs(el)),
    ))
}

fn source_reproduction() -> Outcome {
    let cfg = RunConfig::bundled();
    let t = Instant::now();
    let grid = FrequencyGrid::from_spec(&cfg.grid).map_err(err)?;
    let jsa = compute_jsa(&cfg.pump, &cfg.crystal, &grid).map_err(err)?;
    let r = schmidt_report(&jsa).map_err(err)?;
    let el = t.elapsed();
    let (ws, wi) = (jsa.signal_fwhm_nm().unwrap_or(f64::NAN), jsa.idler_fwhm_nm().unwrap_or(f64::NAN));
    let lin = compute_jsa(&cfg.pump, &CrystalSpec::linearized_default(), &grid).map_err(err)?;
    let (ls, li) = (lin.signal_fwhm_nm().unwrap_or(f64::NAN), lin.idler_fwhm_nm().unwrap_or(f64::NAN));
    let pass = within(ws, 1.55, 0.15)
        && within(wi, 13.6, 0.15)
        && within(r.schmidt_number, 5.60, 0.15)
        && within(r.purity, 0.18, 0.15)
        && within(ls, 1.55, 0.02)
        && within(li, 13.6, 0.02)
        && el < Duration::from_secs(30);
    Ok((
        pass,
        format!(
            "{}x{} Sellmeier: signal {ws:.3} nm (1.55 +-15%), idler {wi:.2} nm (13.6 +-15%), K {:.3} (5.60 +-15%), \
             P {:.4} (0.18 +-15%), {} (limit 30 s); linearized: {ls:.4} / {li:.3} nm (+-2%)",
            grid.signal.len,
            grid.idler.len,
            r.schmidt_number,
            r.purity,
            secs(el)
        ),
    ))
}

/// |f|² pushed through the wavelength to tick maps, 4x4 sub-samples per grid cell.
fn oracle_jsi(jsa: &JsaGrid, acq: &AcquisitionConfig, r: &ResolvedBuild) -> Vec<f64> {
    const C: f64 = 299_792.458;
    const SUB: usize = 4;
    let g = jsa.grid;
    let (dld, fib) = (acq.dld, acq.fibre);
    let tick = r.tick_ps as f64;
    let len = dld.t_a_ps * dld.v_mm_per_ps;
    let intensity = jsa.intensity();
    let mut out = vec![0.0; r.signal.bins * r.idler.bins];
    for s in 0..g.signal.len {
        for i in 0..g.idler.len {
            let w = intensity[s * g.idler.len + i] / (SUB * SUB) as f64;
            if w == 0.0 {
                continue;
            }
            for a in 0..SUB {
                let ws = g.signal.start + g.signal.step * (s as f64 + (a as f64 + 0.5) / SUB as f64 - 0.5);
                let x = dld.x_center_mm + (2.0 * PI * C / ws - 515.0) / dld.grating_dispersion_nm_per_mm;
                if !(0.0..=len).contains(&x) {
                    continue;
                }
                let dt = ((2.0 * x / dld.v_mm_per_ps - dld.t_a_ps) / tick).round() as i64;
                let Some(p) = r.signal.index(dt) else { continue };
                for b in 0..SUB {
                    let wi = g.idler.start + g.idler.step * (i as f64 + (b as f64 + 0.5) / SUB as f64 - 0.5);
                    let li = 2.0 * PI * C / wi;
                    let tau = ((fib.reference_delay_ps + fib.dispersion_ps_per_nm * (li - fib.reference_wavelength_nm))
                        / tick)
                        .round() as i64;
                    if let Some(q) = r.idler.index(tau) {
                        out[p * r.idler.bins + q] += w;
                    }
                }
            }
        }
    }
    out
}

fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += (x - ma) * (y - mb);
        aa += (x - ma) * (x - ma);
        bb += (y - mb) * (y - mb);
    }
    ab / (aa * bb).sqrt()
}

fn analyze_k(out: &BuildOutput, r: &ResolvedBuild, cfg: &RunConfig) -> Result<f64, String> {
    let h = accumulate_histograms(&out.coincidences, &out.events, r);
    let mut buf = Vec::new();
    write_jsi(&mut buf, &h.jsi, serde_json::json!({})).map_err(err)?;
    let m = read_matrix(buf.as_slice()).map_err(err)?;
    Ok(biphoton::cli::analyze_matrix(&m, cfg).map_err(err)?.schmidt.schmidt_number)
}

struct CleanRun {
    dir: PathBuf,
    cfg: RunConfig,
    jsa: JsaGrid,
    k_clean: f64,
}

fn clean_config() -> RunConfig {
    let mut cfg = RunConfig::bundled();
    cfg.acquisition.pair_prob_per_pulse = 0.005;
    cfg.acquisition.eta_signal = 1.0;
    cfg.acquisition.eta_idler = 1.0;
    cfg.acquisition.duration_s = 3.0;
    cfg.acquisition = cfg.acquisition.ideal();
    cfg
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> Result<PathBuf, String> {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(cfg).map_err(err)?).map_err(err)?;
    Ok(p)
}

fn round_trip(dir: &Path) -> Result<(Outcome, Option<CleanRun>), String> {
    let cfg = clean_config();
    let cfg_path = write_config(dir, "clean.json", &cfg)?;
    let t = Instant::now();
    let sim = cmd_simulate_jsa(&cfg_path, &dir.join("jsa")).map_err(err)?;
    let gen = cmd_gen_tags(&dir.join("jsa/jsa.bin"), &cfg_path, &dir.join("tags")).map_err(err)?;
    let built = cmd_build(&dir.join("tags/tags.ttag"), &cfg_path, &dir.join("build"), 0).map_err(err)?;
    let analysis = cmd_analyze(&dir.join("build/jsi.csv"), Some(&cfg_path), None, None).map_err(err)?;
    let el = t.elapsed();

    let jsa = read_jsa(fs::File::open(dir.join("jsa/jsa.bin")).map_err(err)?).map_err(err)?;
    let r = cfg.build.resolve(&cfg.acquisition.header()).map_err(err)?;
    let measured = read_matrix(fs::File::open(dir.join("build/jsi.csv")).map_err(err)?).map_err(err)?;
    let c = ncc(&measured.values, &oracle_jsi(&jsa, &cfg.acquisition, &r));
    let k_direct = sim.schmidt.schmidt_number;
    let k_clean = analysis.schmidt.schmidt_number;
    let pass = gen.detected_pairs >= 1_000_000
        && c >= 0.99
        && within(k_clean, k_direct, 0.05)
        && el < Duration::from_secs(120);
    let detail = format!(
        "{} detected pairs, {} coincidences, NCC {c:.4} (>= 0.99), analyze K {k_clean:.3} vs direct K {k_direct:.3} \
         ({:+.2}%, tol 5%), {} (limit 120 s)",
        gen.detected_pairs,
        built.diagnostics.coincidences,
        100.0 * (k_clean / k_direct - 1.0),
        secs(el)
    );
    Ok((Ok((pass, detail)), Some(CleanRun { dir: dir.to_path_buf(), cfg, jsa, k_clean })))
}

fn jitter_degradation(run: &CleanRun) -> Outcome {
    let jittered = AcquisitionConfig::default();
    let mut acq = run.cfg.acquisition.clone();
    acq.mcp_jitter_fwhm_ps = jittered.mcp_jitter_fwhm_ps;
    acq.dtx_jitter_fwhm_ps = jittered.dtx_jitter_fwhm_ps;
    acq.snspd_mcp_conv_jitter_fwhm_ps = jittered.snspd_mcp_conv_jitter_fwhm_ps;
    let (tags, _) = generate(&run.jsa, &acq).map_err(err)?;
    let r = run.cfg.build.resolve(&acq.header()).map_err(err)?;
    let out = build_parallel(&tags, &r, 0).map_err(err)?;
    let k = analyze_k(&out, &r, &run.cfg)?;
    let ratio = k / run.k_clean;
    Ok((
        ratio < 0.8,
        format!(
            "dt_x jitter {} ps, MCP-SNSPD jitter {} ps: K {k:.3} vs clean K {:.3}, ratio {ratio:.3} (< 0.8)",
            acq.dtx_jitter_fwhm_ps,
            acq.snspd_mcp_conv_jitter_fwhm_ps,
            run.k_clean
        ),
    ))
}

struct DefaultRun {
    out: BuildOutput,
    r: ResolvedBuild,
    channels: biphoton::tagstream::ChannelMap,
    duration: f64,
}

fn default_run(jsa: &JsaGrid) -> Result<DefaultRun, String> {
    let cfg = RunConfig::bundled();
    let (tags, _) = generate(jsa, &cfg.acquisition).map_err(err)?;
    let r = cfg.build.resolve(&cfg.acquisition.header()).map_err(err)?;
    let out = build_parallel(&tags, &r, 0).map_err(err)?;
    Ok(DefaultRun { out, r, channels: cfg.acquisition.channels, duration: cfg.acquisition.duration_s })
}

fn slice_conservation(d: &DefaultRun) -> Outcome {
    let jsi = accumulate_histograms(&d.out.coincidences, &[], &d.r).jsi;
    let mut cases = 0;
    for width in [1i64, 6, 16] {
        for origin in [-37i64, 0, 150, 191, 333] {
            for n in [1usize, 5, 40] {
                let s = slice_time_resolved(&d.out.coincidences, &d.r, width, origin, n).map_err(err)?;
                let mut sum = s.out_of_window.counts.clone();
                let mut oor = s.out_of_window.out_of_range;
                for f in &s.frames {
                    for (a, b) in sum.iter_mut().zip(&f.counts) {
                        *a += b;
                    }
                    oor += f.out_of_range;
                }
                if sum != jsi.counts || oor != jsi.out_of_range {
                    return Ok((false, format!("mismatch at width {width} ticks, origin {origin}, {n} frames")));
                }
                cases += 1;
            }
        }
    }
    Ok((
        true,
        format!(
            "{cases} slicings (25/150/400 ps windows) of {} coincidences conserve every cell exactly",
            d.out.coincidences.len()
        ),
    ))
}

fn irf_recovery(jsa: &JsaGrid, d: &DefaultRun) -> Outcome {
    let cfg = RunConfig::bundled();
    let mut acq = cfg.acquisition.clone();
    acq.pair_prob_per_pulse = 0.01;
    acq.eta_signal = 1.0;
    acq.eta_idler = 0.0;
    acq.duration_s = 2.0;
    let (tags, _) = generate(jsa, &acq).map_err(err)?;
    let r = cfg.build.resolve(&acq.header()).map_err(err)?;
    let out = build_parallel(&tags, &r, 0).map_err(err)?;
    let h = accumulate_histograms(&[], &out.events, &r).irf;
    let fit = fit_peak(&h, PeakModel::Gaussian, &cfg.analysis.fit);
    let events = h.in_range();

    let irf = accumulate_histograms(&[], &d.out.events, &d.r).irf;
    let centre = fit_peak(&irf, PeakModel::Gaussian, &cfg.analysis.fit);
    let width = (150.0 / d.r.tick_ps as f64).round() as i64;
    let origin = (centre.center / d.r.tick_ps as f64 - 2.5 * width as f64).round() as i64;
    let frames = slice_time_resolved(&d.out.coincidences, &d.r, width, origin, 5).map_err(err)?.frame_totals();
    let contrast = frames[0] < frames[1] && frames[1] < frames[2] && frames[2] > frames[3] && frames[3] > frames[4];
    Ok((
        fit.converged && events >= 1_000_000 && within(fit.fwhm, 263.0, 0.05) && contrast,
        format!(
            "{events} events (>= 1e6), Gaussian FWHM {:.1} ps (263 +-5%); 5 x 150 ps frames {frames:?}",
            fit.fwhm
        ),
    ))
}

fn rates(d: &DefaultRun) -> Outcome {
    let rep = rates_report(&d.out, &d.channels, d.duration).map_err(err)?;
    let hz = |n: &str| rep.singles_hz.iter().find(|(k, _)| k == n).map_or(f64::NAN, |(_, v)| *v);
    let (mcp, snspd) = (hz("mcp"), hz("snspd"));
    Ok((
        within(mcp, 6.1e4, 0.10) && within(snspd, 6.1e4, 0.10) && within(rep.coincidence_hz, 2.2e4, 0.10),
        format!(
            "1 s: MCP {mcp:.0} Hz, SNSPD {snspd:.0} Hz (6.1e4 +-10%), coincidences {:.0} Hz (2.2e4 +-10%)",
            rep.coincidence_hz
        ),
    ))
}

fn calibration_fixed_points() -> Outcome {
    let cfg = RunConfig::bundled();
    let dld = cfg.acquisition.dld;
    let tick = cfg.acquisition.tick_ps;
    let edge = (dld.t_a_ps / tick as f64) as i64;
    let lo = dld_position(-edge, tick, &dld).map_err(err)?;
    let hi = dld_position(edge, tick, &dld).map_err(err)?;
    let t0 = (cfg.acquisition.fibre.reference_delay_ps / tick as f64) as i64;
    let l0 = idler_wavelength(t0, tick, &cfg.acquisition.fibre);
    let exact = lo == 0.0 && hi == dld.t_a_ps * dld.v_mm_per_ps && l0 == 1550.0;

    let mut worst = 0.0f64;
    for model in [PeakModel::Gaussian, PeakModel::SincSquared] {
        let p = FitParams { center: 1234.5, width: 87.0, amplitude: 5000.0, baseline: 3.0 };
        let x: Vec<f64> = (0..400).map(|k| 600.0 + 3.3 * k as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| model.eval(v, &p)).collect();
        let f = fit_peak_xy(&x, &y, model, &FitOptions::full_range());
        if !f.converged {
            return Ok((false, format!("{model:?} fit did not converge")));
        }
        for (got, want) in [(f.center, p.center), (f.width, p.width), (f.amplitude, p.amplitude)] {
            worst = worst.max((got / want - 1.0).abs());
        }
    }
    Ok((
        exact && worst < 1e-6,
        format!(
            "x(-t_a) = {lo} mm, x(+t_a) = {hi} mm, lambda(T0) = {l0} nm; noiseless fits worst relative error {worst:.1e} (1e-6)"
        ),
    ))
}

fn determinism(run: &CleanRun) -> Outcome {
    let cfg_path = run.dir.join("clean.json");
    let ttag = run.dir.join("tags/tags.ttag");
    let (_, tags) = read_all(fs::File::open(&ttag).map_err(err)?).map_err(err)?;
    let mut hashes = Vec::new();
    for threads in [1usize, 4, 8] {
        let out = run.dir.join(format!("build_t{threads}"));
        cmd_build(&ttag, &cfg_path, &out, threads).map_err(err)?;
        let mut names: Vec<String> = fs::read_dir(&out)
            .map_err(err)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        names.retain(|n| n.ends_with(".csv"));
        names.sort();
        let h: Vec<(String, String)> = names
            .into_iter()
            .map(|n| Ok((sha256_hex(&fs::read(out.join(&n)).map_err(err)?), n)))
            .collect::<Result<_, String>>()?;
        hashes.push(h);
    }
    let builds_equal = hashes.windows(2).all(|w| w[0] == w[1]);
    cmd_gen_tags(&run.dir.join("jsa/jsa.bin"), &cfg_path, &run.dir.join("tags_again")).map_err(err)?;
    let same = |f: &str| -> Result<bool, String> {
        Ok(fs::read(run.dir.join("tags").join(f)).map_err(err)? == fs::read(run.dir.join("tags_again").join(f)).map_err(err)?)
    };
    let gen_equal = same("tags.ttag")? && same("truth.jsonl")?;
    Ok((
        tags.len() >= 10_000_000 && builds_equal && gen_equal,
        format!(
            "{} tags (>= 1e7): {} CSVs identical across 1/4/8 threads: {builds_equal}; same-seed gen-tags identical: {gen_equal}",
            tags.len(),
            hashes[0].len()
        ),
    ))
}

fn throughput(run: &CleanRun) -> Outcome {
    let (header, tags) = read_all(fs::File::open(run.dir.join("tags/tags.ttag")).map_err(err)?).map_err(err)?;
    let r = run.cfg.build.resolve(&header).map_err(err)?;
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let t = Instant::now();
        std::hint::black_box(build(&tags, &r).map_err(err)?);
        best = best.min(t.elapsed().as_secs_f64());
    }
    let rate = tags.len() as f64 / best;
    Ok((rate >= 1e7, format!("serial build of {} tags in {best:.3} s: {rate:.3e} tags/s (>= 1e7)", tags.len())))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let (pass, detail) = o.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failed += 1;
        }
        println!("criterion {n:>2} {name}: {}: {detail}", if pass { "PASS" } else { "FAIL" });
    };

    report(1, "Schmidt identity", schmidt_identity());
    report(2, "source reproduction", source_reproduction());

    let tmp = tempfile::tempdir().expect("temp dir");
    let run = match round_trip(tmp.path()) {
        Ok((o, run)) => {
            report(3, "round-trip fidelity", o);
            run
        }
        Err(e) => {
            report(3, "round-trip fidelity", Err(e));
            None
        }
    };
    let missing = || Err("round-trip run unavailable".to_string());
    report(4, "jitter degradation", run.as_ref().map_or_else(missing, jitter_degradation));

    let jsa = match &run {
        Some(r) => Ok(r.jsa.clone()),
        None => {
            let cfg = RunConfig::bundled();
            FrequencyGrid::from_spec(&cfg.grid)
                .and_then(|g| compute_jsa(&cfg.pump, &cfg.crystal, &g))
                .map_err(err)
        }
    };
    let default = jsa.as_ref().map_err(Clone::clone).and_then(default_run);
    let no_default = |e: &String| Err(format!("default run: {e}"));
    report(5, "slice conservation", default.as_ref().map_or_else(no_default, slice_conservation));
    report(
        6,
        "IRF recovery",
        match (&jsa, &default) {
            (Ok(j), Ok(d)) => irf_recovery(j, d),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        },
    );
    report(7, "rates", default.as_ref().map_or_else(no_default, rates));
    report(8, "calibration fixed points", calibration_fixed_points());
    report(9, "determinism", run.as_ref().map_or_else(missing, determinism));
    report(10, "throughput", run.as_ref().map_or_else(missing, throughput));

    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
