//! Acceptance run: one PASS/FAIL line per criterion at pinned tolerances.
//! Runs as a plain binary so the lines are always printed: progress goes
//! to stderr, the ordered summary to stdout.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use qhd::classical::{analytic_stationary_action, shoot_stationary_action};
use qhd::deviation::{
    branch_average_residual, classical_hj_residual, gaussian_packet, hbar_limit_study, identity_residual,
    implied_classical_fields, sample_deviation, LimitSetup, Sign,
};
use qhd::evolve::{evolve, mean_energy, EvolutionConfig, FrameSeries, Potential};
use qhd::fields::{normalize, trapezoid, Grid1D, MadelungFields, PhysicalConstants, WaveField};
use qhd::harness::checks::{action_phase_mismatch, fringes};
use qhd::harness::{execute, preset, run, RunOptions, Scenario, PRESETS};
use qhd::stats::{ks_critical_99, ks_statistic};
use qhd::trajectories::equivariance_distance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), qhd::Error>;

fn c1() -> PhysicalConstants {
    PhysicalConstants::default()
}

fn manufactured(grid: Grid1D, rho: impl Fn(f64) -> f64, s: impl Fn(f64) -> f64) -> MadelungFields {
    let x = grid.coordinates();
    MadelungFields::from_density_action(
        grid,
        0.0,
        x.iter().map(|&x| rho(x)).collect(),
        x.iter().map(|&x| s(x)).collect(),
        &c1(),
        1e-300,
    )
    .expect("manufactured fields")
}

fn short_preset_frames(name: &str, steps: usize) -> Result<FrameSeries, qhd::Error> {
    let s = preset(name)?;
    let cfg = EvolutionConfig::new(s.evolution.dt, steps).with_store_every(5);
    evolve(&s.initial_wave()?, &s.potential, &s.constants, &cfg)
}

fn criterion_1() -> Outcome {
    let c = c1();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = Grid1D::new(-10.0, 10.0, 2001)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (a1, a2, b1, b2): (f64, f64, f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let (w1, k1, k2, q): (f64, f64, f64, f64) = (rng.gen_range(0.1..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.2..1.5), rng.gen_range(-0.3..0.3));
        let rho = move |x: f64| (-(x - a1).powi(2) / (2.0 * b1 * b1)).exp() + w1 * (-(x - a2).powi(2) / (2.0 * b2 * b2)).exp() + 1e-6;
        let s = move |x: f64| k1 * x + (k2 * x).sin() + q * x * x;
        worst = worst.max(branch_average_residual(&manufactured(grid, rho, s), &c).value);
    }
    let mut frames_worst: f64 = 0.0;
    for name in PRESETS.iter().take(4) {
        let fs = short_preset_frames(name, 50)?;
        for f in &fs.fields {
            frames_worst = frames_worst.max(branch_average_residual(f, &fs.constants).value);
        }
    }
    let pass = worst <= 1e-12 && frames_worst <= 1e-12;
    Ok((pass, format!("random pairs {worst:.2e}, preset frames {frames_worst:.2e} (tol 1e-12 of term scale)")))
}

fn free_closure_run(n: usize, dt: f64) -> Result<FrameSeries, qhd::Error> {
    let c = c1();
    let g = Grid1D::new(-22.0, 22.0, n)?;
    let w = gaussian_packet(g, -1.0, 2.0, 2.0, &c)?;
    evolve(&w, &Potential::Free, &c, &EvolutionConfig::new(dt, (1.0 / dt).round() as usize).with_store_every(10))
}

fn hj_worst(fs: &FrameSeries, k: usize) -> Result<f64, qhd::Error> {
    let mut worst: f64 = 0.0;
    for sign in [Sign::Plus, Sign::Minus] {
        let b = implied_classical_fields(fs, k, &fs.constants, sign)?;
        worst = worst.max(classical_hj_residual(&b, &fs.fields[k], &fs.potential, &fs.constants)?.value);
    }
    Ok(worst)
}

fn corrupt(fs: &mut FrameSeries) -> Result<(), qhd::Error> {
    let c = fs.constants;
    for f in fs.fields.iter_mut() {
        let g = f.grid;
        let s: Vec<f64> = f.action.iter().enumerate().map(|(i, s)| s + 0.1 * g.x(i).sin()).collect();
        *f = MadelungFields::from_density_action(g, f.t, f.rho.clone(), s, &c, f.rho_floor)?;
    }
    Ok(())
}

fn criterion_2() -> Outcome {
    let mut coarse = free_closure_run(2048, 1e-3)?;
    let fine = free_closure_run(4095, 5e-4)?;
    let (kc, kf) = (coarse.len() / 2, fine.len() / 2);
    let rc = hj_worst(&coarse, kc)?;
    let rf = hj_worst(&fine, kf)?;
    let ratio = rc / rf;
    corrupt(&mut coarse)?;
    let bad = hj_worst(&coarse, kc)?;
    let control = bad / rc;
    let pass = rc <= 1e-4 && (ratio - 4.0).abs() <= 0.8 && control >= 1e3;
    Ok((
        pass,
        format!("residual {rc:.2e} (tol 1e-4), refinement ratio {ratio:.2} (4 +- 0.8), corrupted/clean {control:.0} (>= 1000)"),
    ))
}

fn criterion_3() -> Outcome {
    let c = c1();
    let ratio = |lo: f64, hi: f64, rho: &dyn Fn(f64) -> f64| -> f64 {
        let r = |n: usize| identity_residual(&manufactured(Grid1D::new(lo, hi, n).unwrap(), rho, |_| 0.0), &c).value;
        r(201) / r(401)
    };
    let gauss = ratio(-5.0, 5.0, &|x: f64| (-x * x / 2.0).exp());
    let expo = ratio(0.0, 2.0, &|x: f64| (1.5 * x).exp());
    let flat = identity_residual(&manufactured(Grid1D::new(0.0, 1.0, 101)?, |_| 0.7, |_| 0.0), &c).max_abs;
    let pass = (gauss - 4.0).abs() <= 0.8 && (expo - 4.0).abs() <= 0.8 && flat == 0.0;
    Ok((pass, format!("gaussian ratio {gauss:.3}, exponential ratio {expo:.3} (4 +- 0.8), constant density {flat:e}")))
}

fn moments(w: &WaveField) -> (f64, f64) {
    let g = w.grid();
    let rho = w.density();
    let m0 = trapezoid(&rho, g.dx());
    let x1: Vec<f64> = (0..g.n()).map(|i| g.x(i) * rho[i]).collect();
    let mean = trapezoid(&x1, g.dx()) / m0;
    let x2: Vec<f64> = (0..g.n()).map(|i| (g.x(i) - mean).powi(2) * rho[i]).collect();
    (mean, (trapezoid(&x2, g.dx()) / m0).sqrt())
}

fn criterion_4() -> Outcome {
    let c = c1();
    // norm and energy over 10^4 steps of a displaced packet in a trap
    let omega = 1.0;
    let p = Potential::Harmonic { omega };
    let g = Grid1D::new(-10.0, 10.0, 2048)?;
    let x0 = 2.0;
    let sig = (0.5f64).sqrt();
    let w0 = normalize(&WaveField::from_fn(g, 0.0, |x| Complex64::new((-(x - x0).powi(2) / (4.0 * sig * sig)).exp(), 0.0))?.with_dirichlet_ends()?)?;
    let fs = evolve(&w0, &p, &c, &EvolutionConfig::new(1e-3, 10_000).with_store_every(100))?;
    let norm_drift = fs.diagnostics.max_norm_drift / fs.diagnostics.initial_norm;
    let e0 = mean_energy(&fs.waves[0], &p, &c);
    let energy_drift = fs.waves.iter().map(|w| (mean_energy(w, &p, &c) - e0).abs() / e0.abs()).fold(0.0, f64::max);
    let period_steps = 6280;
    let dt = 2.0 * PI / period_steps as f64;
    let fc = evolve(&w0, &p, &c, &EvolutionConfig::new(dt, period_steps).with_store_every(10))?;
    let centroid = fc
        .waves
        .iter()
        .map(|w| (moments(w).0 - x0 * (omega * w.t()).cos()).abs() / x0)
        .fold(0.0, f64::max);

    // spreading: the width doubles at t = 2 sqrt(3) m sigma0^2 / hbar
    let s0 = 1.0;
    let t2 = 2.0 * 3f64.sqrt() * s0 * s0;
    let gf = Grid1D::new(-25.0, 25.0, 4096)?;
    let wf = gaussian_packet(gf, 0.0, s0, 0.0, &c)?;
    let steps = (t2 / 1e-3).round() as usize;
    let ff = evolve(&wf, &Potential::Free, &c, &EvolutionConfig::new(t2 / steps as f64, steps).with_store_every(steps))?;
    let width = moments(ff.waves.last().unwrap()).1;
    let expect = s0 * (1.0 + (t2 / (2.0 * s0 * s0)).powi(2)).sqrt();
    let width_err = (width - expect).abs() / expect;
    let pass = norm_drift <= 1e-10 && energy_drift <= 1e-6 && width_err <= 5e-3 && centroid <= 1e-3;
    Ok((
        pass,
        format!(
            "norm drift {norm_drift:.2e} (1e-10), energy drift {energy_drift:.2e} (1e-6), width at doubling {width_err:.2e} (5e-3), centroid {centroid:.2e} x0 (1e-3)"
        ),
    ))
}

fn without_deviation(name: &str, n: usize) -> Result<Scenario, qhd::Error> {
    let mut s = preset(name)?;
    s.deviation = None;
    s.checks.clear();
    if let Some(t) = &mut s.trajectories {
        t.n = n;
    }
    Ok(s)
}

struct EnsembleRuns {
    free: qhd::harness::RunProducts,
    slit: qhd::harness::RunProducts,
    coherent: Option<qhd::harness::RunProducts>,
}

fn criterion_5(r: &EnsembleRuns) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, p) in [("free_gaussian", &r.free), ("double_slit", &r.slit)] {
        let last = p.frames.fields.last().unwrap();
        let ks = equivariance_distance(p.last.as_ref().unwrap(), &last.rho, &last.grid)?;
        pass &= ks <= 0.03;
        parts.push(format!("{name} KS {ks:.4}"));
    }
    Ok((pass, format!("{} (tol 0.03, 10^4 trajectories)", parts.join(", "))))
}

fn criterion_6(r: &EnsembleRuns) -> Outcome {
    let bins = preset("double_slit")?.trajectories.unwrap().bins;
    let f = fringes(r.slit.last.as_ref().unwrap(), &r.slit.frames, bins)?;
    let pass = f.max_offset_bins <= 1 && f.correlation >= 0.99;
    Ok((
        pass,
        format!(
            "{} maxima, worst offset {} bin(s) (<= 1), Pearson {:.4} (>= 0.99)",
            f.peaks.len(),
            f.max_offset_bins,
            f.correlation
        ),
    ))
}

fn criterion_7() -> Outcome {
    let c = c1();
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mags = Vec::with_capacity(n);
    let mut plus = 0usize;
    for _ in 0..n {
        let d = sample_deviation(&mut rng, &c);
        mags.push(d.magnitude);
        plus += (d.sign == Sign::Plus) as usize;
    }
    let h = c.hbar();
    let nf = n as f64;
    let mean = mags.iter().sum::<f64>() / nf;
    let rate = 2.0 / h;
    let ks = ks_statistic(&mags, |x| 1.0 - (-rate * x).exp());
    let frac = plus as f64 / nf;
    let mean_tol = 3.0 * h / (2.0 * nf.sqrt());
    let frac_tol = 3.0 * 0.5 / nf.sqrt();
    let pass = (mean - h / 2.0).abs() <= mean_tol && ks < ks_critical_99(n) && (frac - 0.5).abs() <= frac_tol;
    Ok((
        pass,
        format!(
            "mean {mean:.5} (0.5 +- {mean_tol:.1e}), KS {ks:.2e} (< {:.2e}), plus fraction {frac:.5} (0.5 +- {frac_tol:.1e})",
            ks_critical_99(n)
        ),
    ))
}

fn criterion_8() -> Outcome {
    let c = c1();
    let scales = [1.0, 0.25, 1.0 / 16.0];
    let free = LimitSetup {
        grid: Grid1D::new(-20.0, 20.0, 16384)?,
        potential: Potential::Free,
        x0: -4.0,
        sigma: 2.0,
        p0: 0.5,
        t_final: 2.0,
        dt: 1e-3,
        probe_offset: 1.0,
    };
    let barrier = LimitSetup {
        grid: Grid1D::new(-40.0, 40.0, 32768)?,
        potential: Potential::Barrier {
            height: 1.0,
            center: 0.0,
            width: 2.0,
        },
        x0: -5.0,
        sigma: 1.0,
        p0: 2.0,
        t_final: 6.0,
        dt: 1e-3,
        probe_offset: 1.0,
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, setup) in [("free", free), ("barrier", barrier)] {
        let r = hbar_limit_study(&setup, &c, &scales)?;
        pass &= r.fraction_decreasing && r.deviation_decreasing;
        let q: Vec<String> = r.rows.iter().map(|row| format!("{:.2e}", row.quantum_potential_fraction)).collect();
        let d: Vec<String> = r.rows.iter().map(|row| format!("{:.2e}", row.probe_deviation)).collect();
        parts.push(format!("{name}: Q fraction [{}], deviation [{}]", q.join(", "), d.join(", ")));
    }
    Ok((pass, format!("{} (strictly decreasing)", parts.join("; "))))
}

fn criterion_9() -> Outcome {
    let c = c1();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for pot in [Potential::Free, Potential::Harmonic { omega: 1.3 }] {
        for _ in 0..100 {
            let x1 = rng.gen_range(-5.0..5.0);
            let x2 = rng.gen_range(-5.0..5.0);
            let t1 = rng.gen_range(0.0..1.0);
            let t2 = t1 + rng.gen_range(0.05..2.0);
            let exact = analytic_stationary_action(x1, t1, x2, t2, &pot, &c)?.expect("closed form").action;
            let shot = shoot_stationary_action(x1, t1, x2, t2, &pot, &c, 1e-12)?.action;
            let d = (shot - exact).abs();
            let tol = (1e-6 * exact.abs()).max(1e-8);
            worst = worst.max(d / tol);
            failures += (d > tol) as usize;
        }
    }
    Ok((failures == 0, format!("200 pairs, {failures} outside max(1e-8, 1e-6 |S_c|), worst {worst:.2e} of tolerance")))
}

fn criterion_10(r: &EnsembleRuns) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in [("free_gaussian", Some(&r.free)), ("harmonic_coherent", r.coherent.as_ref())] {
        let p = p.expect("run");
        let m = action_phase_mismatch(p.initial.as_ref().unwrap(), p.last.as_ref().unwrap(), &p.frames)?;
        pass &= m <= 0.01;
        parts.push(format!("{name} {m:.2e}"));
    }
    Ok((pass, format!("{} (tol 1e-2 relative)", parts.join(", "))))
}

fn criterion_11() -> Outcome {
    let mut s: Scenario = qhd::harness::parse_config(
        "[grid]\nx_min = -20\nx_max = 20\nn = 1024\n[initial]\nkind = gaussian\nx0 = -2\nsigma = 1.5\nk0 = 1\n\
         [evolution]\nt_final = 0.5\nstore_every = 5\n[trajectories]\nn = 2000\nseed = 99\n\
         [deviation]\nsegment_dt = 0.05\nn_segments = 5\n[checks]\nequivariance = 0.05\n",
    )?;
    s.name = "determinism".into();
    let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
    let manifests: Vec<_> = dirs
        .iter()
        .map(|d| {
            run(
                &s,
                &RunOptions {
                    out_dir: Some(d.path().to_path_buf()),
                    ..Default::default()
                },
            )
        })
        .collect::<Result<_, _>>()?;
    let mut identical = manifests[0].outputs == manifests[1].outputs && !manifests[0].outputs.is_empty();
    for o in &manifests[0].outputs {
        identical &= std::fs::read(dirs[0].path().join(&o.path))? == std::fs::read(dirs[1].path().join(&o.path))?;
    }
    let same_manifest = manifests[0].without_timing() == manifests[1].without_timing();
    Ok((
        identical && same_manifest,
        format!(
            "{} exported files byte-identical: {identical}, manifests equal modulo timing: {same_manifest}",
            manifests[0].outputs.len()
        ),
    ))
}

fn report(lines: &mut Vec<(usize, String)>, id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let el = t.elapsed();
    let (ok, detail) = match out {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = el <= budget;
    let pass = ok && in_time;
    let line = format!(
        "criterion {id:>2} {name}: {} | {detail} | {:.1}s (budget {}s{})",
        if pass { "PASS" } else { "FAIL" },
        el.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", exceeded" }
    );
    eprintln!("{line}");
    lines.push((id, line));
    pass
}

fn main() {
    let secs = Duration::from_secs;
    let mut all = true;
    let mut lines = Vec::new();
    all &= report(&mut lines, 1, "branch cancellation", secs(1), criterion_1);
    all &= report(&mut lines, 2, "derivation closure", secs(120), criterion_2);
    all &= report(&mut lines, 3, "identity", secs(1), criterion_3);
    all &= report(&mut lines, 4, "schrodinger solver", secs(120), criterion_4);

    all &= report(&mut lines, 7, "deviation sampler", secs(5), criterion_7);
    all &= report(&mut lines, 8, "classical limit", secs(300), criterion_8);
    all &= report(&mut lines, 9, "stationary action", secs(5), criterion_9);

    // one ensemble run per scenario serves criteria 5, 6 and 10
    let t = Instant::now();
    let runs = (|| -> Result<EnsembleRuns, qhd::Error> {
        Ok(EnsembleRuns {
            free: execute(&without_deviation("free_gaussian", 10_000)?)?,
            slit: execute(&without_deviation("double_slit", 10_000)?)?,
            coherent: None,
        })
    })();
    let shared = t.elapsed();
    match runs {
        Err(e) => {
            for (id, name) in [(5, "born-rule equivariance"), (6, "double-slit fringes"), (10, "action/phase consistency")] {
                lines.push((id, format!("criterion {id:>2} {name}: FAIL | error: {e}")));
            }
            all = false;
        }
        Ok(mut runs) => {
            let budget = secs(60).saturating_sub(shared);
            all &= report(&mut lines, 5, "born-rule equivariance", budget, || criterion_5(&runs));
            let budget = secs(120).saturating_sub(shared);
            all &= report(&mut lines, 6, "double-slit fringes", budget, || criterion_6(&runs));
            // the free run is shared, so its share of the budget is taken up front
            let budget = secs(60).saturating_sub(shared / 2);
            all &= report(&mut lines, 10, "action/phase consistency", budget, || {
                runs.coherent = Some(execute(&without_deviation("harmonic_coherent", 10_000)?)?);
                criterion_10(&runs)
            });
        }
    }
    all &= report(&mut lines, 11, "determinism", secs(60), criterion_11);
    lines.sort_by_key(|l| l.0);
    println!("acceptance summary");
    for (_, l) in &lines {
        println!("{l}");
    }
    println!("ensemble runs shared by criteria 5, 6 and 10 took {:.1}s", shared.as_secs_f64());
    if !all {
        std::process::exit(1);
    }
}
