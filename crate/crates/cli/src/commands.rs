use std::fs;
use std::path::Path;

use sidco::frame::{
    certify_etf, fraction_at_least, frame_metrics, mutual_coherence, sorted_unique_correlations, welch_bound,
    EQUIANGULAR_TOL,
};
use sidco::io::{
    num, patch_matrix, read_frame, svg_line_plot, write_frame, CsvTable, FrameHeader, RunManifest, Series,
};
use sidco::sidco::{run, SidcoConfig};
use sidco::sparse::{adapt_dictionary, planted_rotation_data, run_cs_experiment, CsExperiment, SensingSource};
use sidco::{Error, Frame, FrameMetrics, Result};

use crate::{AdaptArgs, AnalyzeArgs, CsBenchArgs, DesignArgs};

const CREATOR: &str = concat!("sidco ", env!("CARGO_PKG_VERSION"));
/// Coherence drift tolerated across an adaptation run.
const ADAPT_COHERENCE_TOL: f64 = 1e-10;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn echo_config(t: &mut CsvTable, cfg: &SidcoConfig) {
    t.echo("m", cfg.m)
        .echo("N", cfg.n)
        .echo("K", cfg.max_sweeps)
        .echo("nonneg", cfg.nonneg)
        .echo("escape", cfg.escape_enabled)
        .echo("eps_stop", cfg.eps_stop)
        .echo("radius_slack", cfg.radius_slack)
        .echo("solver_tol", cfg.solver_tol)
        .echo("tie_tol", cfg.tie_tol);
}

pub fn design(a: &DesignArgs) -> Result<()> {
    let mut cfg = SidcoConfig::new(a.m, a.n).with_sweeps(a.k).with_nonneg(a.nonneg);
    cfg.eps_stop = a.eps_stop;
    cfg.solver_tol = a.solver_tol;
    cfg.escape_enabled = !a.no_escape;
    cfg.validate()?;
    if a.seeds.0.is_empty() {
        return Err(Error::InvalidInput("no seeds given".into()));
    }
    fs::create_dir_all(&a.out)?;
    let tag = format!("m{}_N{}{}", a.m, a.n, if a.nonneg { "_nonneg" } else { "" });

    let mut table = CsvTable::new(&[
        "seed",
        "mu_h0_raw",
        "mu_h0",
        "mu",
        "mu_bar",
        "fp",
        "fp_min",
        "welch",
        "sweeps",
        "escapes",
        "best_sweep",
    ]);
    echo_config(&mut table, &cfg);
    table.echo("seeds", seed_list(&a.seeds.0));

    let mut series = Vec::new();
    let (mut raw0, mut mus, mut mu_bars) = (Vec::new(), Vec::new(), Vec::new());
    let welch = welch_bound(a.m, a.n)?;
    for &seed in &a.seeds.0 {
        let c = cfg.clone().with_seed(seed);
        let (frame, report) = run(&c)?;
        let fm = report.final_metrics;
        let raw = report.raw_initial_coherence.unwrap_or(report.initial_coherence);
        write_frame(
            &a.out.join(format!("frame_{tag}_seed{seed}.frame")),
            &frame,
            &FrameHeader::describe(&frame, CREATOR, Some(seed))?,
        )?;
        RunManifest::new(&c, &report).write(&a.out.join(format!("manifest_{tag}_seed{seed}.json")))?;
        println!(
            "seed {seed}: mu(H0) {raw:.4} -> mu {:.4} after {} sweeps, {} escapes, {:.1}s",
            fm.mu,
            report.trace.len(),
            report.escapes.len(),
            report.total_seconds()
        );
        table.push(vec![
            seed.to_string(),
            num(raw),
            num(report.initial_coherence),
            num(fm.mu),
            num(fm.mu_bar),
            num(fm.fp),
            num(FrameMetrics::fp_minimum(frame.m(), frame.n())),
            num(welch),
            report.trace.len().to_string(),
            report.escapes.len().to_string(),
            report.best_sweep.to_string(),
        ])?;
        let mut pts = vec![(0.0, report.initial_coherence)];
        pts.extend(report.trace.iter().enumerate().map(|(k, &mu)| ((k + 1) as f64, mu)));
        series.push(Series { name: format!("seed {seed}"), points: pts });
        raw0.push(raw);
        mus.push(fm.mu);
        mu_bars.push(fm.mu_bar);
    }
    table.write(&a.out.join(format!("design_{tag}.csv")))?;
    fs::write(
        a.out.join(format!("design_{tag}_trace.svg")),
        svg_line_plot(&format!("Coherence by sweep, m={} N={}", a.m, a.n), "sweep", "mutual coherence", &series),
    )?;

    println!();
    println!(
        "{:>5} {:>5} {:>11} {:>10} {:>10} {:>8} {:>14}",
        "m", "N", "avg mu(H0)", "min mu(H)", "avg mu(H)", "WB", "avg mu_bar(H)"
    );
    println!(
        "{:>5} {:>5} {:>11.4} {:>10.4} {:>10.4} {:>8.4} {:>14.4}",
        a.m,
        a.n,
        mean(&raw0),
        mus.iter().copied().fold(f64::INFINITY, f64::min),
        mean(&mus),
        welch,
        mean(&mu_bars)
    );
    Ok(())
}

/// Reads a frame file, naming the path in any error.
fn load_frame(p: &Path) -> Result<(Frame, FrameHeader)> {
    read_frame(p).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", p.display())),
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", p.display()))),
        other => other,
    })
}

fn seed_list(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let (frame, header) = load_frame(&a.frame)?;
    let fm = frame_metrics(&frame);
    let cert = certify_etf(&frame, EQUIANGULAR_TOL);
    let corr = sorted_unique_correlations(&frame);
    let above99 = fraction_at_least(&corr, 0.99 * fm.mu);
    let above95 = fraction_at_least(&corr, 0.95 * fm.mu);

    println!("frame          {} (m = {}, N = {}, creator {})", a.frame.display(), header.m, header.n, header.creator);
    println!("coherence      {:.6}", fm.mu);
    println!("welch bound    {:.6}", fm.welch);
    println!("avg coherence  {:.6}", fm.mu_bar);
    println!("frame pot.     {:.6} (minimum {:.6})", fm.fp, FrameMetrics::fp_minimum(frame.m(), frame.n()));
    match fm.sparsity_cap {
        Some(s) => println!("sparsity cap   {s}"),
        None => println!("sparsity cap   unbounded (orthonormal)"),
    }
    println!("equiangular    {}", cert.is_equiangular);
    println!("tight          {}", cert.is_tight);
    println!("ETF            {}", cert.is_etf());
    println!("pairs          {}", corr.len());
    println!("above 0.99 mu  {:.2}%", 100.0 * above99);
    println!("above 0.95 mu  {:.2}%", 100.0 * above95);

    if let Some(path) = &a.csv {
        let mut t = CsvTable::new(&["rank", "abs_correlation"]);
        t.echo("source", a.frame.display())
            .echo("m", frame.m())
            .echo("N", frame.n())
            .echo("coherence", fm.mu)
            .echo("fraction_above_0.99mu", above99)
            .echo("fraction_above_0.95mu", above95);
        for (k, c) in corr.iter().enumerate() {
            t.push(vec![(k + 1).to_string(), num(*c)])?;
        }
        t.write(path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

struct Source {
    name: String,
    coherence: Option<f64>,
    sensing: SensingSource,
}

pub fn cs_bench(a: &CsBenchArgs) -> Result<()> {
    if a.m.is_empty() {
        return Err(Error::InvalidInput("no measurement counts given".into()));
    }
    for s in &a.sources {
        if s != "sidco" && s != "random" {
            return Err(Error::InvalidInput(format!("unknown sensing source `{s}` (expected sidco or random)")));
        }
    }
    let files: Vec<(String, Frame)> = a
        .frames
        .iter()
        .map(|p| {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            load_frame(p).map(|(f, _)| (format!("file:{name}"), f))
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(&a.out)?;

    let mut table = CsvTable::new(&[
        "m",
        "source",
        "coherence",
        "mean_error",
        "q10",
        "q50",
        "q90",
        "max_error",
        "support_recovery",
    ]);
    table
        .echo("N", a.n)
        .echo("M", a.atoms)
        .echo("s", a.s)
        .echo("trials", a.trials)
        .echo("seed", a.seed)
        .echo("K", a.k)
        .echo("sources", a.sources.join(";"))
        .echo("frames", files.iter().map(|f| f.0.as_str()).collect::<Vec<_>>().join(";"));

    let mut series: Vec<Series> = Vec::new();
    println!("{:>4} {:>24} {:>10} {:>12} {:>10}", "m", "source", "coherence", "mean error", "support");
    for &m in &a.m {
        let e = CsExperiment {
            m,
            n: a.n,
            atoms: a.atoms,
            sparsity: a.s,
            trials: a.trials,
            seed: a.seed,
            keep_trials: false,
        };
        e.validate()?;
        let mut sources = Vec::new();
        for s in &a.sources {
            sources.push(match s.as_str() {
                "sidco" => {
                    let (frame, _) = run(&SidcoConfig::new(m, a.n).with_sweeps(a.k).with_seed(a.seed))?;
                    Source {
                        name: "sidco".into(),
                        coherence: Some(mutual_coherence(&frame)),
                        sensing: SensingSource::Fixed(frame.into_matrix()),
                    }
                }
                "random" => Source { name: "random".into(), coherence: None, sensing: SensingSource::RandomGaussian },
                _ => unreachable!("source names are checked above"),
            });
        }
        for (name, f) in files.iter().filter(|(_, f)| f.m() == m) {
            sources.push(Source {
                name: name.clone(),
                coherence: Some(mutual_coherence(f)),
                sensing: SensingSource::Fixed(f.vectors().clone()),
            });
        }
        for src in sources {
            let r = run_cs_experiment(&e, &src.sensing)?;
            let coh = src.coherence.map_or_else(|| "NA".to_string(), num);
            println!(
                "{m:>4} {:>24} {:>10} {:>12.6} {:>10.4}",
                src.name,
                src.coherence.map_or_else(|| "-".to_string(), |c| format!("{c:.4}")),
                r.mean_error,
                r.support_recovery_rate
            );
            table.push(vec![
                m.to_string(),
                src.name.clone(),
                coh,
                num(r.mean_error),
                num(r.quantiles[0]),
                num(r.quantiles[1]),
                num(r.quantiles[2]),
                num(r.max_error),
                num(r.support_recovery_rate),
            ])?;
            match series.iter_mut().find(|s| s.name == src.name) {
                Some(s) => s.points.push((m as f64, r.mean_error)),
                None => series.push(Series { name: src.name, points: vec![(m as f64, r.mean_error)] }),
            }
        }
    }
    let csv = a.out.join("cs_bench.csv");
    table.write(&csv)?;
    fs::write(
        a.out.join("cs_bench.svg"),
        svg_line_plot(
            &format!("Relative reconstruction error, N={} M={} s={}", a.n, a.atoms, a.s),
            "measurements m",
            "mean relative error",
            &series,
        ),
    )?;
    println!("wrote {}", csv.display());
    Ok(())
}

pub fn adapt(a: &AdaptArgs) -> Result<()> {
    let (f0, _) = load_frame(&a.frame)?;
    let y = match (&a.images, a.synthetic) {
        (Some(dir), _) => {
            if f0.m() != 64 {
                return Err(Error::InvalidInput(format!("8x8 patches need m = 64, frame has m = {}", f0.m())));
            }
            patch_matrix(dir, 8)?
        }
        (None, true) => planted_rotation_data(&f0, a.s, a.samples, a.noise, a.seed)?.0,
        (None, false) => return Err(Error::InvalidInput("choose a data source: --images DIR or --synthetic".into())),
    };
    let run = adapt_dictionary(&y, &f0, a.s, a.k)?;
    let (mu0, mu1) = (mutual_coherence(&f0), mutual_coherence(&run.frame));
    if (mu1 - mu0).abs() > ADAPT_COHERENCE_TOL {
        return Err(Error::NumericsFailure(format!("coherence drifted from {mu0} to {mu1}")));
    }
    fs::create_dir_all(&a.out)?;
    write_frame(&a.out.join("adapted.frame"), &run.frame, &FrameHeader::describe(&run.frame, CREATOR, Some(a.seed))?)?;

    let mut t = CsvTable::new(&["iteration", "relative_error", "alignment_before", "alignment_after"]);
    t.echo("frame", a.frame.display())
        .echo("data", a.images.as_ref().map_or("synthetic".to_string(), |d| d.display().to_string()))
        .echo("samples", y.cols())
        .echo("s", a.s)
        .echo("K", a.k)
        .echo("seed", a.seed)
        .echo("noise", a.noise);
    for (i, e) in run.errors.iter().enumerate() {
        let (b, af) = if i == 0 {
            ("NA".to_string(), "NA".to_string())
        } else {
            (num(run.alignment_before[i - 1]), num(run.alignment_after[i - 1]))
        };
        t.push(vec![i.to_string(), num(*e), b, af])?;
    }
    t.write(&a.out.join("adapt_errors.csv"))?;
    let pts: Vec<(f64, f64)> = run.errors.iter().enumerate().map(|(i, &e)| (i as f64, e)).collect();
    fs::write(
        a.out.join("adapt_errors.svg"),
        svg_line_plot(
            "Relative reconstruction error during adaptation",
            "iteration",
            "||Y - FX|| / ||Y||",
            &[Series { name: "adapted".into(), points: pts }],
        ),
    )?;
    if !run.rank_deficient_steps.is_empty() {
        eprintln!("note: rank-deficient Procrustes steps at {:?}", run.rank_deficient_steps);
    }
    println!("samples        {}", y.cols());
    println!("coherence      {mu0:.12} (unchanged)");
    println!("error before   {:.6}", run.errors[0]);
    println!("error after    {:.6}", run.errors.last().expect("errors has K+1 entries"));
    println!("wrote {}", a.out.join("adapted.frame").display());
    Ok(())
}
