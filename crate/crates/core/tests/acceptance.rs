//! Acceptance criteria 1–11, one PASS/FAIL line each.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use stable_trees::runner::{parse_config, records_csv, run, ExperimentRecord, RunOutput};

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    elapsed: Duration,
    notes: Vec<String>,
}

fn exec(text: &str) -> (RunOutput, Duration) {
    let cfg = parse_config(text).unwrap_or_else(|e| panic!("config: {e}\n{text}"));
    let t0 = Instant::now();
    let out = run(&cfg).unwrap_or_else(|e| panic!("run: {e}\n{text}"));
    (out, t0.elapsed())
}

fn step_seconds(out: &RunOutput, step: &str) -> f64 {
    out.timings
        .iter()
        .find(|t| t.step == step)
        .map_or(f64::NAN, |t| t.seconds)
}

fn select<'a>(out: &'a RunOutput, names: &[&str]) -> Vec<&'a ExperimentRecord> {
    out.records
        .iter()
        .filter(|r| {
            names
                .iter()
                .any(|n| r.statistic == *n || r.statistic.ends_with(&format!(":{n}")))
        })
        .collect()
}

fn describe(r: &ExperimentRecord) -> String {
    let t = r
        .target
        .map(|t| format!(" target={t:.6e}"))
        .unwrap_or_default();
    format!(
        "{} {} [{}] value={:.6e}{t} {:?}",
        if r.pass { "ok  " } else { "FAIL" },
        r.statistic,
        r.params,
        r.value,
        r.criterion
    )
}

/// Passes when every selected record passes and at least `min` were found.
fn judge(records: &[&ExperimentRecord], min: usize, notes: &mut Vec<String>) -> bool {
    notes.extend(records.iter().filter(|r| !r.pass).map(|r| describe(r)));
    if records.len() < min {
        notes.push(format!(
            "expected at least {min} records, found {}",
            records.len()
        ));
        return false;
    }
    records.iter().all(|r| r.pass)
}

/// `shared` is the time of runs computed before the closure and used by it.
fn criterion(
    id: u32,
    title: &'static str,
    shared: Duration,
    f: impl FnOnce(&mut Vec<String>) -> bool,
) -> Outcome {
    let t0 = Instant::now();
    let mut notes = Vec::new();
    let pass = f(&mut notes);
    let o = Outcome {
        id,
        title,
        pass,
        elapsed: t0.elapsed() + shared,
        notes,
    };
    println!(
        "{} C{:<2} {} ({:.2}s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.title,
        o.elapsed.as_secs_f64()
    );
    for n in &o.notes {
        println!("       {n}");
    }
    o
}

fn spinal_text(gamma: f64, reps: usize, seed: u64) -> String {
    format!(
        "[run]\nexperiment = spinal-sample\ngamma = {gamma}\nseed = {seed}\nreplicates = {reps}\n\
         [grid]\na = 1\nradii = 0.25, 0.5, 1\nlambdas = 0.5, 1, 2\n[tolerance]\nsigma = 3\nks_p = 0.01\n"
    )
}

fn density_text(gamma: f64) -> String {
    format!(
        "[run]\nexperiment = density-exp\ngamma = {gamma}\nseed = 11\n\
         [grid]\na = 1\nn_min = 2\nn_max = 20\npoints = 10\ngroups = 100\nsource = spinal\n\
         [gauges]\nkind = pack_level\nconv = level_critical p=1 theta=1\ndiv = level_critical p=1 theta=0.25\n\
         [tolerance]\nagreement = 0.9\n"
    )
}

fn main() -> ExitCode {
    let mut outcomes = Vec::new();

    outcomes.push(criterion(
        1,
        "analytic kernel: ODE, semigroup, kappa identity, gamma=2 closed forms, under 10 s",
        Duration::ZERO,
        |n| {
            let mut ok = true;
            for g in [1.2, 1.5, 1.8, 2.0] {
                let (out, dt) = exec(&format!(
                    "[run]\nexperiment = analytic-check\ngamma = {g}\n"
                ));
                let names = [
                    "max_abs_ode_minus_closed_form",
                    "max_semigroup_residual",
                    "max_kappa_implicit_residual",
                    "max_abs_kappa_minus_tanh",
                    "max_abs_mass_lt_minus_sech2",
                ];
                ok &= judge(&select(&out, &names), if g == 2.0 { 5 } else { 3 }, n);
                if dt.as_secs_f64() >= 10.0 {
                    n.push(format!("gamma={g}: runtime {:.2}s", dt.as_secs_f64()));
                    ok = false;
                }
            }
            ok
        },
    ));

    outcomes.push(criterion(
        2,
        "tail constants vs independent gamma function to 1e-10",
        Duration::ZERO,
        |n| {
            let mut ok = true;
            for g in [1.2, 1.5, 1.8] {
                let (out, _) = exec(&format!(
                    "[run]\nexperiment = analytic-check\ngamma = {g}\n"
                ));
                ok &= judge(&select(&out, &["z_small", "z_tail", "y_tail"]), 3, n);
            }
            ok
        },
    ));

    let (spin2_big, spin2_big_dt) = exec(&spinal_text(2.0, 100_000, 21));
    outcomes.push(criterion(
        3,
        "spinal sampler gamma=2: LT within 3 SE, KS vs Gamma(2, r/2), 1e5 draws under 60 s",
        spin2_big_dt,
        |n| {
            let mut ok = judge(&select(&spin2_big, &["level_ball_lt"]), 9, n);
            ok &= judge(&select(&spin2_big, &["ks_p_vs_gamma_2_r_over_2"]), 3, n);
            let draw_time = step_seconds(&spin2_big, "spinal_draws");
            n.push(format!(
                "draw time {draw_time:.2}s, full run {:.2}s",
                spin2_big_dt.as_secs_f64()
            ));
            ok && draw_time < 60.0
        },
    ));

    let (spin2, spin2_dt) = exec(&spinal_text(2.0, 10_000, 22));
    let (spin15, spin15_dt) = exec(&spinal_text(1.5, 10_000, 23));
    let heavy_dt = Duration::from_secs_f64(step_seconds(&spin15, "heavy_tails"));
    outcomes.push(criterion(
        4,
        "scaling laws: level balls and level-mass atoms, KS p > 0.01, gamma in {1.5, 2}",
        spin2_dt + spin15_dt,
        |n| {
            let names = ["ks_p_scaled_level_ball_vs_unit", "ks_p_scaled_atom_vs_unit"];
            let a = judge(&select(&spin2, &names), 5, n);
            let b = judge(&select(&spin15, &names), 5, n);
            a && b
        },
    ));

    outcomes.push(criterion(
        5,
        "heavy tails gamma=1.5: tail and small-x constants within 15% at 1e6 draws, under 5 min",
        heavy_dt,
        |n| {
            let ok = judge(&select(&spin15, &["tail_ratio", "small_x_ratio"]), 2, n);
            let t = step_seconds(&spin15, "heavy_tails");
            n.push(format!("sampling time {t:.2}s"));
            ok && t < 300.0
        },
    ));

    outcomes.push(criterion(
        6,
        "shell independence: |corr| <= 3/sqrt(reps) for Lambda and Q shells, 1e4 reps",
        Duration::ZERO,
        |n| {
            let names = ["abs_corr_level_shells", "abs_corr_mass_shells"];
            let a = judge(&select(&spin2, &names), 6, n);
            let b = judge(&select(&spin15, &names), 6, n);
            a && b
        },
    ));

    outcomes.push(criterion(7, "tree metric: four-point, brute-force distances, mass balls", Duration::ZERO, |n| {
        let mut ok = true;
        for (g, size) in [(2.0, 256), (1.5, 16), (1.2, 16)] {
            let (out, _) = exec(&format!(
                "[run]\nexperiment = simulate-tree\ngamma = {g}\nseed = 31\nreplicates = 4\n[grid]\nn = {size}\n"
            ));
            let names = [
                "max_four_point_residual",
                "distance_mismatches",
                "mass_ball_monotone_violations",
                "mass_ball_exhaustive_gap",
            ];
            ok &= judge(&select(&out, &names), 4, n);
        }
        ok
    }));

    outcomes.push(criterion(8, "Brownian calibration: survival ratio within 3 SE, dispersion index in [0.9, 1.1]", Duration::ZERO, |n| {
        let (out, _) = exec(
            "[run]\nexperiment = calibrate\ngamma = 2\nseed = 41\nreplicates = 10000\n[grid]\na = 1\nb = 2\nn = 64\n",
        );
        judge(&select(&out, &["survival_ratio", "branching_dispersion_index"]), 2, n)
    }));

    outcomes.push(criterion(9, "spinal/tree consistency gamma=2: discrepancy shrinks >= 30%, corrected KS p > 0.01", Duration::ZERO, |n| {
        let (out, _) = exec(
            "[run]\nexperiment = calibrate\ngamma = 2\nseed = 51\nreplicates = 1000\n\
             [grid]\na = 1\nn = 64\nconsistency = true\nradii = 0.5\neps_level = 0.03125\ngroups = 2000\npoints = 1000\n",
        );
        let recs: Vec<_> = out
            .records
            .iter()
            .filter(|r| r.statistic == "discrepancy_shrink" || (r.statistic == "ks_p_corrected_vs_spinal" && !matches!(r.criterion, stable_trees::runner::Criterion::Report)))
            .collect();
        for r in &out.records {
            if r.statistic.starts_with("discretization_discrepancy") {
                n.push(describe(r));
            }
        }
        judge(&recs, 2, n)
    }));

    outcomes.push(criterion(
        10,
        "dichotomy trends agree with series verdicts for >= 90% of points, gamma in {1.5, 2}",
        Duration::ZERO,
        |n| {
            let mut ok = true;
            for g in [1.5, 2.0] {
                let (out, _) = exec(&density_text(g));
                ok &= judge(&select(&out, &["trend_agreement"]), 2, n);
            }
            ok
        },
    ));

    outcomes.push(criterion(
        11,
        "reproducibility: same config and seed give identical bytes, workers do not matter",
        Duration::ZERO,
        |n| {
            let texts = [
                spinal_text(1.5, 2000, 61).replace("[grid]", "[grid]\nmass = true"),
                "[run]\nexperiment = simulate-tree\ngamma = 2\nseed = 62\nreplicates = 3\n"
                    .to_string(),
                density_text(2.0).replace("groups = 100", "groups = 10"),
                "[run]\nexperiment = calibrate\ngamma = 2\nseed = 63\nreplicates = 500\n"
                    .to_string(),
            ];
            let mut ok = true;
            for text in &texts {
                let mut cfg = parse_config(text).unwrap();
                let a = run(&cfg).unwrap();
                let b = run(&cfg).unwrap();
                cfg.workers = 4;
                let c = run(&cfg).unwrap();
                let same = |x: &RunOutput, y: &RunOutput| {
                    records_csv(&x.records) == records_csv(&y.records) && x.artifacts == y.artifacts
                };
                if !same(&a, &b) || !same(&a, &c) {
                    n.push(format!("{} outputs differ", a.experiment));
                    ok = false;
                }
            }
            ok
        },
    ));

    let failed: Vec<_> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("C{}", o.id))
        .collect();
    let total: f64 = outcomes.iter().map(|o| o.elapsed.as_secs_f64()).sum();
    println!(
        "acceptance: {} of {} criteria pass ({total:.1}s){}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {}", failed.join(", "))
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
