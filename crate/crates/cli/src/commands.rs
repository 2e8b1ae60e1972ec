use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use scldgm::analysis::{
    concatenated_floor, concatenated_threshold, convergence_profile, outer_floor, outer_threshold, sigma_from_eb_no,
    write_threshold_csv, ThresholdOptions, ThresholdRow,
};
use scldgm::codec::{simulate_ber, ConcatenatedCode, SimulationConfig};
use scldgm::dde::{evolve_inner, evolve_outer, DdeOptions, DdeTrace};
use scldgm::optimizer::{de_search_from, initial_checkpoint, Checkpoint};
use scldgm::{CodeEnsemble, EnsembleKind, EnsembleSpec};

use crate::config::*;
use crate::CliError;

/// Shared command-line context.
pub struct Context {
    pub config_dir: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl Context {
    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        fs::create_dir_all(&self.out)?;
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json(&self, name: &str, value: &impl serde::Serialize) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn inner_ensemble(r: &EnsembleRef, ctx: &Context) -> Result<CodeEnsemble, CliError> {
    let e = r.resolve(&ctx.config_dir)?;
    if e.kind() != EnsembleKind::LdgmInner {
        return Err(config_error(format!("inner ensemble must be ldgm_inner, got {:?}", e.kind())));
    }
    Ok(e)
}

fn outer_ensemble(r: &EnsembleRef, ctx: &Context) -> Result<CodeEnsemble, CliError> {
    let e = r.resolve(&ctx.config_dir)?;
    if !e.kind().is_outer() {
        return Err(config_error(format!("outer ensemble must be ldgm_outer or ldpc_outer, got {:?}", e.kind())));
    }
    Ok(e)
}

fn threshold_options(dde: DdeOptions, precision_db: f64) -> Result<ThresholdOptions, CliError> {
    if !(precision_db > 0.0) {
        return Err(config_error(format!("precision_db must be positive, got {precision_db}")));
    }
    Ok(ThresholdOptions { dde, precision_db, ..Default::default() })
}

fn label(e: &CodeEnsemble) -> String {
    let (v, c) = (e.vn_dist(), e.cn_dist());
    match (v.regular_degree(), c.regular_degree()) {
        (Some(a), Some(b)) => format!("({a},{b})"),
        _ => format!("({:.3},{:.3})", v.average_degree(), c.average_degree()),
    }
}

pub fn dde(cfg: DdeConfig, ctx: &Context) -> Result<(), CliError> {
    let inner = inner_ensemble(&cfg.inner, ctx)?;
    let outer = outer_ensemble(&cfg.outer, ctx)?;
    let points = cfg.sweep.points()?;
    let opts = cfg.dde.options()?;
    let rate = inner.rate() * outer.rate();
    let inner_opts = DdeOptions { stop_below: None, ..opts.clone() };
    let runs: Vec<_> = points
        .par_iter()
        .map(|&db| {
            let sigma = sigma_from_eb_no(db, rate);
            let first = evolve_inner(&inner, sigma, &inner_opts)?;
            let second = evolve_outer(&outer, &first.decision, &opts)?;
            Ok((db, sigma, first.decision, DdeTrace { inner: first.trace, outer: second.trace }))
        })
        .collect::<scldgm::Result<_>>()?;
    let mut w = ctx.create("dde.csv")?;
    writeln!(w, "eb_no_db,sigma,inner_error,overall_error")?;
    println!("{:>10} {:>12} {:>14} {:>14}", "Eb/No dB", "sigma", "E inner", "E overall");
    for (i, (db, sigma, decision, trace)) in runs.iter().enumerate() {
        let e_in = trace.inner.final_error().unwrap_or(f64::NAN);
        let e = trace.final_error();
        writeln!(w, "{db:.16e},{sigma:.16e},{e_in:.16e},{e:.16e}")?;
        println!("{db:>10.4} {sigma:>12.6} {e_in:>14.4e} {e:>14.4e}");
        if cfg.traces {
            let mut t = ctx.create(&format!("trace_{i:03}.csv"))?;
            trace.write_csv(&mut t)?;
            t.flush()?;
        }
        if cfg.snapshots {
            let mut t = ctx.create(&format!("pmf_{i:03}.csv"))?;
            decision.write_csv(&mut t)?;
            t.flush()?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn threshold(cfg: ThresholdConfig, ctx: &Context) -> Result<(), CliError> {
    if cfg.rows.is_empty() {
        return Err(config_error("no threshold rows"));
    }
    let opts = threshold_options(cfg.dde.options()?, cfg.precision_db)?;
    let rows = cfg
        .rows
        .iter()
        .map(|r| {
            let outer = outer_ensemble(&r.outer, ctx)?;
            let inner = r.inner.as_ref().map(|i| inner_ensemble(i, ctx)).transpose()?;
            Ok((inner, outer))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let results: Vec<ThresholdRow> = rows
        .par_iter()
        .map(|(inner, outer)| match inner {
            Some(i) => Ok(ThresholdRow::new(i, concatenated_threshold(i, outer, &opts)?)),
            None => Ok(ThresholdRow::new(outer, outer_threshold(outer, &opts)?)),
        })
        .collect::<scldgm::Result<_>>()?;
    let mut w = ctx.create("threshold.csv")?;
    write_threshold_csv(&results, &mut w)?;
    w.flush()?;
    println!("{:>16} {:>12} {:>10} {:>12} {:>10}", "code", "Eb/No dB", "sigma", "critical", "gap dB");
    for ((inner, outer), row) in rows.iter().zip(&results) {
        let name = label(inner.as_ref().unwrap_or(outer));
        let r = &row.result;
        println!(
            "{name:>16} {:>12.4} {:>10.5} {:>12.4e} {:>10.4}",
            r.threshold_eb_no_db, r.threshold_sigma, r.critical_ber, r.gap_to_shannon_db
        );
    }
    Ok(())
}

pub fn bounds(cfg: BoundsConfig, ctx: &Context) -> Result<(), CliError> {
    if cfg.ensembles.is_empty() {
        return Err(config_error("no ensembles"));
    }
    let points = cfg.sweep.points()?;
    let opts = cfg.dde.options()?;
    let entries = cfg
        .ensembles
        .iter()
        .map(|e| {
            let inner = inner_ensemble(&e.inner, ctx)?;
            let outer = e.outer.as_ref().map(|o| outer_ensemble(o, ctx)).transpose()?;
            Ok((e.name.as_str(), inner, outer))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let jobs: Vec<(usize, f64)> = (0..entries.len()).flat_map(|i| points.iter().map(move |&p| (i, p))).collect();
    let rows: Vec<(f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(i, db)| {
            let (_, inner, outer) = &entries[i];
            let inner_opts = DdeOptions { stop_below: None, ..opts.clone() };
            match outer {
                None => {
                    let sigma = sigma_from_eb_no(db, inner.rate());
                    let e = evolve_inner(inner, sigma, &inner_opts)?.trace.final_error().unwrap_or(f64::NAN);
                    Ok((sigma, e, outer_floor(inner, sigma)))
                }
                Some(outer) => {
                    let sigma = sigma_from_eb_no(db, inner.rate() * outer.rate());
                    let first = evolve_inner(inner, sigma, &inner_opts)?;
                    let e = evolve_outer(outer, &first.decision, &inner_opts)?.trace.final_error().unwrap_or(f64::NAN);
                    Ok((sigma, e, concatenated_floor(inner, outer, sigma)))
                }
            }
        })
        .collect::<scldgm::Result<_>>()?;
    let mut w = ctx.create("bounds.csv")?;
    writeln!(w, "name,eb_no_db,sigma,dde_ber,bound_ber")?;
    println!("{:>12} {:>10} {:>14} {:>14}", "ensemble", "Eb/No dB", "DDE", "bound");
    for (&(i, db), (sigma, e, b)) in jobs.iter().zip(&rows) {
        let name = entries[i].0;
        writeln!(w, "{name},{db:.16e},{sigma:.16e},{e:.16e},{b:.16e}")?;
        println!("{name:>12} {db:>10.4} {e:>14.4e} {b:>14.4e}");
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(cfg: SimulateConfig, ctx: &Context) -> Result<(), CliError> {
    if cfg.codes.is_empty() || cfg.schedules.is_empty() {
        return Err(config_error("simulation needs at least one code and one schedule"));
    }
    if cfg.max_blocks == 0 || cfg.batch == 0 {
        return Err(config_error("max_blocks and batch must be at least 1"));
    }
    let points = cfg.sweep.points()?;
    let mut codes = Vec::new();
    for c in &cfg.codes {
        let inner = inner_ensemble(&c.inner, ctx)?;
        let outer = outer_ensemble(&c.outer, ctx)?;
        if c.k == 0 {
            return Err(config_error(format!("code {}: k must be positive", c.name)));
        }
        codes.push((c.name.as_str(), inner, outer, c.k, c.graph_seed));
    }
    let mut w = ctx.create("simulate.csv")?;
    writeln!(w, "code,schedule,eb_no_db,ber,ci_low,ci_high,blocks,bit_errors")?;
    println!("{:>12} {:>10} {:>10} {:>12} {:>8}", "code", "schedule", "Eb/No dB", "BER", "blocks");
    for (name, inner, outer, k, graph_seed) in codes {
        let code = ConcatenatedCode::build(&inner, &outer, k, graph_seed)?;
        for &schedule in &cfg.schedules {
            let sim = SimulationConfig {
                decoder: cfg.decoder,
                schedule,
                max_blocks: cfg.max_blocks,
                min_errors: cfg.min_errors.unwrap_or(usize::MAX),
                seed: ctx.seed.unwrap_or(cfg.seed),
                batch: cfg.batch,
            };
            let sched = serde_json::to_value(schedule).map_err(std::io::Error::from)?;
            let sched = sched.as_str().unwrap_or_default().to_owned();
            for p in simulate_ber(&code, &points, &sim)? {
                writeln!(
                    w,
                    "{name},{sched},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                    p.eb_no_db, p.ber, p.ci_low, p.ci_high, p.blocks, p.bit_errors
                )?;
                println!("{name:>12} {sched:>10} {:>10.4} {:>12.4e} {:>8}", p.eb_no_db, p.ber, p.blocks);
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_checkpoint(path: &Path, state: &Checkpoint) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(state)?)?;
    fs::rename(tmp, path)
}

pub fn optimize(mut cfg: OptimizeConfig, ctx: &Context) -> Result<(), CliError> {
    if let Some(seed) = ctx.seed {
        cfg.search.seed = seed;
    }
    let search = cfg.search;
    search.validate().map_err(|e| config_error(format!("search: {e}")))?;
    fs::create_dir_all(&ctx.out)?;
    let ck_path = ctx.out.join("checkpoint.json");
    let state = if cfg.resume && ck_path.exists() {
        let text = fs::read_to_string(&ck_path)?;
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", ck_path.display())))?
    } else {
        initial_checkpoint(&search)?
    };
    let outcome = de_search_from(&search, state, |s| write_checkpoint(&ck_path, s).map_err(Into::into))?;
    let outer_rate = search.outer.build()?.rate();
    let inner = EnsembleSpec {
        kind: EnsembleKind::LdgmInner,
        regular: None,
        vn: Some(outcome.best.vn_dist.clone()),
        cn: Some(outcome.best.cn_dist.clone()),
        rate: Some(search.rate / outer_rate),
    };
    ctx.write_json("inner.json", &inner)?;
    ctx.write_json(
        "result.json",
        &serde_json::json!({
            "threshold_eb_no_db": outcome.threshold_db,
            "critical_ber": outcome.critical_ber,
            "vn_dist": outcome.best.vn_dist,
            "cn_dist": outcome.best.cn_dist,
        }),
    )?;
    let mut w = ctx.create("history.csv")?;
    writeln!(w, "level,eb_no_db,generation,best_error,mean_error,screened_feasible")?;
    for g in &outcome.history.generations {
        writeln!(
            w,
            "{},{:.16e},{},{:.16e},{:.16e},{}",
            g.level, g.eb_no_db, g.generation, g.best_error, g.mean_error, g.screened_feasible
        )?;
    }
    w.flush()?;
    let mut w = ctx.create("levels.csv")?;
    writeln!(w, "level,eb_no_db,feasible,generations,best_error")?;
    println!("{:>6} {:>10} {:>9} {:>12}", "level", "Eb/No dB", "feasible", "best E_in");
    for l in &outcome.history.levels {
        writeln!(w, "{},{:.16e},{},{},{:.16e}", l.level, l.eb_no_db, l.feasible, l.generations, l.best_error)?;
        println!("{:>6} {:>10.4} {:>9} {:>12.4e}", l.level, l.eb_no_db, l.feasible, l.best_error);
    }
    w.flush()?;
    println!("threshold {:.4} dB, critical BER {:.4e}", outcome.threshold_db, outcome.critical_ber);
    for (d, c) in outcome.best.vn_dist.iter() {
        println!("  vn degree {d:>4}: {c:.4}");
    }
    for (d, c) in outcome.best.cn_dist.iter() {
        println!("  cn degree {d:>4}: {c:.4}");
    }
    Ok(())
}

pub fn convergence(cfg: ConvergenceConfig, ctx: &Context) -> Result<(), CliError> {
    let inner = inner_ensemble(&cfg.inner, ctx)?;
    let outer = outer_ensemble(&cfg.outer, ctx)?;
    let points = cfg.sweep.points()?;
    let opts = cfg.dde.options()?;
    let critical = match cfg.critical_ber {
        Some(c) if c > 0.0 && c < 0.5 => c,
        Some(c) => return Err(config_error(format!("critical_ber {c} outside (0, 0.5)"))),
        None => outer_threshold(&outer, &threshold_options(opts.clone(), 0.01)?)?.critical_ber,
    };
    let profile = convergence_profile(&inner, critical, &points, inner.rate() * outer.rate(), &opts)?;
    let mut w = ctx.create("convergence.csv")?;
    writeln!(w, "eb_no_db,iterations")?;
    println!("critical BER {critical:.4e}");
    println!("{:>10} {:>10}", "Eb/No dB", "iterations");
    for (db, it) in profile {
        let it = it.map(|n| n.to_string()).unwrap_or_default();
        writeln!(w, "{db:.16e},{it}")?;
        println!("{db:>10.4} {:>10}", if it.is_empty() { "-" } else { &it });
    }
    w.flush()?;
    Ok(())
}
