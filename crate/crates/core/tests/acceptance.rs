//! Acceptance checks, one PASS/FAIL line per criterion. Exits nonzero if
//! any criterion fails.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_complex::Complex64;
use rand::Rng as _;
use rayon::prelude::*;

use plaquette::algebra::{betti_rational, cohomology_order, null_homology_test};
use plaquette::duality::{dualize, equator_crossing, linking_report, v_gamma_dual_test, DualGraph};
use plaquette::experiments::{
    area_and_perimeter, estimate_v_gamma_tilted, point_seed, square_loop, ImportanceEstimate, TiltTarget,
};
use plaquette::lattice::{boundary_of_cell, loop_boundary_chain, BoundaryCondition, CellId, Chain, Cochain, Complex, LatticeBox, PercolationConfig};
use plaquette::plgt::{
    anomaly_example, comparison_identity_check, conditional_wilson, coupling_exact, GaugeBoundary, PlgtParams,
};
use plaquette::prcm::{
    coboundary_at, dual_rcm_distribution, enumerate_measure, sample, Coefficients, ExactDistribution, PrcmParams,
    SampleSpec, SamplerKind, WeightTable,
};
use plaquette::rng::stream;
use plaquette::Result;

use BoundaryCondition::{Closed, Free, Wired};

type Outcome = Result<(bool, String)>;
type IdentityCase<'a> = (&'a Complex, Chain, Vec<GaugeBoundary>, Vec<u64>);

fn beta_of(p: f64) -> f64 {
    -(1.0 - p).ln()
}

fn single_cube() -> Complex {
    Complex::new(&LatticeBox::cube(3, 1).unwrap(), 2).unwrap()
}

fn cube2() -> Complex {
    Complex::new(&LatticeBox::cube(3, 2).unwrap(), 2).unwrap()
}

fn unit_loop(lo: [i64; 3], dirs: [usize; 2]) -> Chain {
    boundary_of_cell(&CellId::primal(&lo, &dirs).unwrap(), 0).unwrap()
}

/// ν on δf classes of the single cube, by enumerating 1-cochains that
/// vanish on a spanning tree of the 1-skeleton (one per gauge orbit).
fn tree_gauge_law(cx: &Complex, q: u64, beta: f64) -> HashMap<Vec<i64>, f64> {
    let nv = cx.count(0);
    let ne = cx.count(1);
    let mut adj = vec![Vec::new(); nv];
    for e in 0..ne {
        let ends: Vec<usize> = cx.faces(1, e).iter().map(|x| x.0).collect();
        adj[ends[0]].push((ends[1], e));
        adj[ends[1]].push((ends[0], e));
    }
    let mut seen = vec![false; nv];
    let mut tree = vec![false; ne];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &(w, e) in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                tree[e] = true;
                queue.push_back(w);
            }
        }
    }
    let free: Vec<usize> = (0..ne).filter(|&e| !tree[e]).collect();
    let plaquettes = cx.variable_cells(Closed);
    let mut f = Cochain::zero(cx.bx(), 1, q).unwrap();
    let mut law: HashMap<Vec<i64>, f64> = HashMap::new();
    for idx in 0..q.pow(free.len() as u32) {
        let mut x = idx;
        for &e in &free {
            f.values[e] = (x % q) as i64;
            x /= q;
        }
        let b: Vec<i64> = plaquettes.iter().map(|&c| coboundary_at(cx, &f, c)).collect();
        let unsat = b.iter().filter(|&&v| v != 0).count() as f64;
        *law.entry(b).or_default() += (-beta * unsat).exp();
    }
    let z: f64 = law.values().sum();
    law.values_mut().for_each(|w| *w /= z);
    law
}

fn criterion_1() -> Outcome {
    let cx = single_cube();
    let mut worst = 0.0f64;
    for q in [2u64, 3, 4, 6] {
        for p in [0.3, 0.7] {
            let par = PlgtParams::new(beta_of(p), q, GaugeBoundary::Closed)?;
            let kappa = coupling_exact(&cx, &par)?;
            let nu = tree_gauge_law(&cx, q, par.beta);
            if nu.len() != kappa.classes.len() {
                return Ok((false, format!("q={q}: {} classes vs {}", kappa.classes.len(), nu.len())));
            }
            for (b, w) in kappa.classes.iter().zip(kappa.f_marginal()) {
                worst = worst.max((w - nu.get(b).copied().unwrap_or(f64::NAN)).abs());
            }
            let mu = enumerate_measure(&cx, &par.prcm(&cx)?)?;
            for (a, b) in kappa.p_marginal().iter().zip(&mu.probabilities) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok((worst <= 1e-12, format!("max marginal error {worst:.2e} over q ∈ {{2,3,4,6}}, p ∈ {{0.3,0.7}}")))
}

fn criterion_2() -> Outcome {
    let cube = single_cube();
    let slab = Complex::new(&LatticeBox::from_extents(&[2, 2, 1])?, 2)?;
    let box2 = cube2();
    let cases: Vec<IdentityCase> = vec![
        (&cube, unit_loop([0, 0, 1], [0, 1]), vec![GaugeBoundary::Closed], vec![2, 3, 4, 6]),
        (&slab, unit_loop([1, 0, 0], [1, 2]), vec![GaugeBoundary::Free, GaugeBoundary::Wired], vec![2, 3, 4, 6]),
        (&box2, unit_loop([0, 0, 1], [0, 1]), vec![GaugeBoundary::Free, GaugeBoundary::Wired], vec![2, 3]),
    ];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (cx, gamma, bcs, qs) in cases {
        for bc in bcs {
            for &q in &qs {
                for p in [0.3, 0.7] {
                    let par = PlgtParams::new(beta_of(p), q, bc.clone())?;
                    let (w, v) = comparison_identity_check(cx, &par, &gamma)?;
                    worst = worst.max((w - Complex64::new(v, 0.0)).norm());
                    checked += 1;
                }
            }
        }
    }
    Ok((worst <= 1e-12, format!("max |E[W] − μ(V)| = {worst:.2e} over {checked} cases (closed cube, free/wired 2×2×1 and 2×2×2)")))
}

fn criterion_3() -> Outcome {
    let ex = anomaly_example(2)?;
    let cx = &ex.complex;
    let vz = null_homology_test(cx, &ex.config, &ex.gamma, 0)?;
    let v2 = null_homology_test(cx, &ex.config, &ex.gamma, 2)?;
    let g = DualGraph::new(cx)?;
    let rep = linking_report(&g, cx, &dualize(cx, &ex.config)?, &ex.r)?;
    let mut ok = !vz && v2 && rep.linking_numbers.iter().map(|l| l.abs()).collect::<Vec<_>>() == [2];
    let mut detail = format!("V(Z)={vz}, V(2)={v2}, linking {:?}", rep.linking_numbers);
    for q in [2u64, 3] {
        let v = null_homology_test(cx, &ex.config, &ex.gamma, q)?;
        let w = conditional_wilson(cx, &ex.config, &ex.gamma, q)?;
        let err = (w - Complex64::new(f64::from(u8::from(v)), 0.0)).norm();
        ok &= err <= 1e-12;
        detail += &format!(", E[W|P] (q={q}) = {:.3} vs 1[V]={}", w.re, u8::from(v));
    }
    Ok((ok, detail))
}

fn criterion_4() -> Outcome {
    let cx = cube2();
    let mut bad = 0;
    let mut configs = 0;
    let mut worst = 0.0f64;
    for bc in [Free, Wired] {
        let vars = cx.variable_cells(bc);
        for m in 0..1u64 << vars.len() {
            let p = PercolationConfig::from_variable_mask(&cx, bc, m);
            let b = betti_rational(&cx, &p, 1)?;
            for q in [2u64, 3, 4, 6] {
                if cohomology_order(&cx, &p, 1, q)? != BigUint::from(q).pow(b as u32) {
                    bad += 1;
                }
            }
            configs += 1;
        }
        for q in [2u64, 3, 4, 6] {
            for p in [0.3, 0.5, 0.7] {
                let a = WeightTable::new(&cx, bc, Coefficients::Cyclic(q))?.distribution(p);
                let r = WeightTable::new(&cx, bc, Coefficients::Rational(q as f64))?.distribution(p);
                worst = worst.max(a.max_abs_difference(&r));
            }
        }
    }
    Ok((bad == 0 && worst <= 1e-12, format!("{configs} configs, {bad} order mismatches, measure difference {worst:.2e}")))
}

fn criterion_5() -> Outcome {
    let cx = cube2();
    let g = DualGraph::new(&cx)?;
    let mut worst = 0.0f64;
    for bc in [Free, Wired] {
        for coeffs in [Coefficients::Cyclic(1), Coefficients::Cyclic(2), Coefficients::Cyclic(3), Coefficients::Cyclic(4), Coefficients::Rational(2.5)] {
            for p in [0.2, 0.5, 0.8] {
                let params = PrcmParams::new(p, coeffs, 2, 3, bc)?;
                let mu = enumerate_measure(&cx, &params)?;
                let dual = dual_rcm_distribution(&cx, &g, bc, params.p_star(), params.q())?;
                worst = worst.max(mu.max_abs_difference(&dual));
            }
        }
    }
    Ok((worst <= 1e-12, format!("max |μ − dual RCM at p*| = {worst:.2e} (free and wired, q ∈ {{1,2,3,4,2.5}})")))
}

fn criterion_6() -> Outcome {
    let cx = Complex::new(&LatticeBox::cube(3, 3)?, 2)?;
    let g = DualGraph::new(&cx)?;
    let loops: Vec<Chain> = [([1, 1, 1], [2, 2, 1]), ([0, 1, 2], [2, 2, 2]), ([1, 1, 0], [2, 1, 2]), ([0, 0, 1], [1, 3, 1])]
        .iter()
        .map(|(lo, hi)| loop_boundary_chain(&LatticeBox::new(lo, hi).unwrap(), 0).unwrap())
        .collect();
    let equator = loop_boundary_chain(&LatticeBox::new(&[0, 0, 1], &[3, 3, 1])?, 0)?;
    let vars = cx.variable_cells(Free);
    let mut rng = stream(6, "acceptance-linking");
    let configs = 600;
    let (mut bad, mut bad_equator, mut failures) = (0, 0, 0);
    for _ in 0..configs {
        let density: f64 = rng.random_range(0.2..0.8);
        let mut p = PercolationConfig::empty(&cx, Free);
        for &c in &vars {
            p.set(c, rng.random::<f64>() < density);
        }
        let crossing = equator_crossing(&g, &dualize(&cx, &p)?, 2, 1);
        for q in [0u64, 2, 3, 4, 6] {
            for gamma in &loops {
                let v = null_homology_test(&cx, &p, gamma, q)?;
                failures += usize::from(!v);
                if v_gamma_dual_test(&g, &cx, &p, gamma, q)? != v {
                    bad += 1;
                }
            }
            let v = null_homology_test(&cx, &p, &equator, q)?;
            if v_gamma_dual_test(&g, &cx, &p, &equator, q)? != v {
                bad += 1;
            }
            if v == crossing {
                bad_equator += 1;
            }
        }
    }
    Ok((
        bad == 0 && bad_equator == 0,
        format!("{configs} configs × 5 moduli × 5 loops: {bad} disagreements, {bad_equator} equator mismatches ({failures} loop tests with ¬V)"),
    ))
}

/// Batch-means mean and standard error.
fn batch_stats(xs: &[f64], batches: usize) -> (f64, f64) {
    let per = xs.len() / batches;
    let means: Vec<f64> = xs.chunks(per).take(batches).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (m, (var / batches as f64).sqrt())
}

fn criterion_7() -> Outcome {
    let cx = cube2();
    let bx = cx.bx().clone();
    let r = LatticeBox::new(&[0, 0, 1], &[1, 1, 1])?;
    let gamma = loop_boundary_chain(&r, 0)?;
    let p = 0.55;
    let sweeps = 100_000;
    let jobs: Vec<(u64, SamplerKind)> =
        [1u64, 2, 3, 4].iter().flat_map(|&q| [(q, SamplerKind::DualHeatBath), (q, SamplerKind::EdwardsSokal)]).collect();
    let results: Vec<Result<(u64, SamplerKind, f64, f64)>> = jobs
        .par_iter()
        .map(|&(q, kind)| {
            let params = PrcmParams::cyclic(p, q, 2, 3, Free)?;
            let exact: ExactDistribution = enumerate_measure(&cx, &params)?;
            let modulus = if q >= 2 { q } else { 0 };
            let mut ev = 0.0;
            let mut en = 0.0;
            for (m, &w) in exact.probabilities.iter().enumerate() {
                let conf = PercolationConfig::from_variable_mask(&cx, Free, m as u64);
                if null_homology_test(&cx, &conf, &gamma, modulus)? {
                    ev += w;
                }
                en += w * conf.count() as f64;
            }
            let mut spec = SampleSpec::new(params, bx.clone(), sweeps, 1000, 70 + q);
            spec.sampler = kind;
            spec.gamma = Some(gamma.clone());
            let run = sample(&spec)?;
            let vs: Vec<f64> = run.trace.iter().map(|t| f64::from(u8::from(t.v_gamma.expect("traced")))).collect();
            let ns: Vec<f64> = run.trace.iter().map(|t| t.occupied as f64).collect();
            let (mv, sv) = batch_stats(&vs, 100);
            let (mn, sn) = batch_stats(&ns, 100);
            Ok((q, kind, (mv - ev).abs() / sv, (mn - en).abs() / sn))
        })
        .collect();
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for r in results {
        let (q, kind, zv, zn) = r?;
        worst = worst.max(zv).max(zn);
        let name = if kind == SamplerKind::DualHeatBath { "dual" } else { "es" };
        detail.push(format!("{name} q={q}: {zv:.1}σ/{zn:.1}σ"));
    }
    Ok((worst <= 3.0, format!("V_γ/|P| deviations {} (max {worst:.2}σ)", detail.join(", "))))
}

fn criterion_8() -> Outcome {
    let cx = cube2();
    let gammas = [unit_loop([0, 0, 1], [0, 1]), unit_loop([1, 0, 0], [1, 2]), loop_boundary_chain(&LatticeBox::new(&[0, 0, 1], &[2, 1, 1])?, 0)?];
    let n = cx.variable_cells(Free).len();
    assert_eq!(n, cx.variable_cells(Wired).len());
    let masks = 1u64 << n;
    // increasing events as indicator tables over masks, per boundary condition
    let catalogue = |bc: BoundaryCondition| -> Result<Vec<Vec<bool>>> {
        let mut events: Vec<Vec<bool>> = Vec::new();
        for j in 0..n {
            events.push((0..masks).map(|m| m >> j & 1 == 1).collect());
        }
        for (a, b) in [(0, 5), (2, 7), (3, 11)] {
            events.push((0..masks).map(|m| m >> a & 1 == 1 || m >> b & 1 == 1).collect());
        }
        for k in [4u32, 8] {
            events.push((0..masks).map(|m| m.count_ones() >= k).collect());
        }
        for gamma in &gammas {
            for q in [0u64, 2, 3] {
                let mut ev = Vec::with_capacity(masks as usize);
                for m in 0..masks {
                    ev.push(null_homology_test(&cx, &PercolationConfig::from_variable_mask(&cx, bc, m), gamma, q)?);
                }
                events.push(ev);
            }
        }
        Ok(events)
    };
    let free_events = catalogue(Free)?;
    let wired_events = catalogue(Wired)?;
    let prob = |mu: &ExactDistribution, e: &[bool]| mu.probability_of(|m| e[m as usize]);
    let (mut fkg_bad, mut order_bad, mut pairs) = (0, 0, 0);
    for coeffs in [Coefficients::Cyclic(1), Coefficients::Cyclic(2), Coefficients::Cyclic(3), Coefficients::Rational(2.5)] {
        for p in [0.3, 0.6] {
            let free = WeightTable::new(&cx, Free, coeffs)?.distribution(p);
            let wired = WeightTable::new(&cx, Wired, coeffs)?.distribution(p);
            for (mu, events) in [(&free, &free_events), (&wired, &wired_events)] {
                let single: Vec<f64> = events.iter().map(|e| prob(mu, e)).collect();
                for (a, ea) in events.iter().enumerate() {
                    for (b, eb) in events.iter().enumerate().skip(a) {
                        let both: Vec<bool> = ea.iter().zip(eb).map(|(x, y)| *x && *y).collect();
                        pairs += 1;
                        if prob(mu, &both) < single[a] * single[b] - 1e-12 {
                            fkg_bad += 1;
                        }
                    }
                }
            }
            for (ef, ew) in free_events.iter().zip(&wired_events) {
                if prob(&free, ef) > prob(&wired, ew) + 1e-12 {
                    order_bad += 1;
                }
            }
        }
    }
    Ok((fkg_bad == 0 && order_bad == 0, format!("{pairs} event pairs: {fkg_bad} FKG violations, {order_bad} free > wired")))
}

fn flatness(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min - 1.0
}

fn trend_points(p: f64, sides: &[i64], target: TiltTarget, proposal: f64) -> Result<Vec<(f64, f64, ImportanceEstimate)>> {
    let margin = 4;
    sides
        .par_iter()
        .map(|&s| {
            let (bx, gamma) = square_loop(3, s, margin)?;
            let (area, per) = area_and_perimeter(&gamma)?;
            let params = PrcmParams::cyclic(p, 1, 2, 3, Free)?;
            let est = estimate_v_gamma_tilted(&params, &bx, &gamma, target, proposal, 100_000, point_seed(9, p, 1, 3, s))?;
            Ok((area, per, est))
        })
        .collect()
}

fn criterion_9() -> Outcome {
    let perim = trend_points(0.95, &[4, 6, 8, 10], TiltTarget::LoopNeighbourhood, 0.5)?;
    let by_per: Vec<f64> = perim.iter().map(|(_, per, e)| e.neg_log().0 / per).collect();
    let by_area: Vec<f64> = perim.iter().map(|(a, _, e)| e.neg_log().0 / a).collect();
    let drop = by_area[0] / by_area[by_area.len() - 1];
    let area = trend_points(0.30, &[2, 3, 4], TiltTarget::SpanningSurface, 0.9)?;
    let small: Vec<f64> = area.iter().map(|(a, _, e)| e.neg_log().0 / a).collect();
    let ok = by_per.iter().chain(&small).all(|x| x.is_finite() && *x > 0.0)
        && flatness(&by_per) <= 0.15
        && drop >= 2.0
        && flatness(&small) <= 0.25;
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ");
    Ok((
        ok,
        format!(
            "p=0.95: −log p̂/Per [{}] spread {:.1}%, /Area drops {drop:.2}×; p=0.30: −log p̂/Area [{}] spread {:.1}%",
            fmt(&by_per),
            100.0 * flatness(&by_per),
            fmt(&small),
            100.0 * flatness(&small)
        ),
    ))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, "seed = 5\n\n[sweep]\np = [0.6, 0.9]\nq = [1, 2, 3]\nsides = [1, 2, 3]\nmargin = 2\nsamples = 3000\nseed = 5\n")?;
    let out = dir.path().join("out");
    let mut outputs = Vec::new();
    for _ in 0..2 {
        if out.exists() {
            fs::remove_dir_all(&out)?;
        }
        let status = Command::new(env!("CARGO_BIN_EXE_plaquette"))
            .args(["sweep", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()?;
        if !status.status.success() {
            return Ok((false, format!("sweep exited with {}", status.status)));
        }
        outputs.push((status.stdout, dir_bytes(&out)));
    }
    let files: Vec<&str> = outputs[0].1.iter().map(|f| f.0.as_str()).collect();
    Ok((outputs[0] == outputs[1], format!("{} output files and stdout compared: {}", files.len(), files.join(", "))))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, u64); 10] = [
        ("1 coupling marginals", criterion_1, 10),
        ("2 Wilson/null-homology identity", criterion_2, 30),
        ("3 anomaly", criterion_3, 10),
        ("4 codimension-one collapse", criterion_4, 120),
        ("5 duality", criterion_5, 120),
        ("6 linking criterion", criterion_6, 300),
        ("7 sampler correctness", criterion_7, 600),
        ("8 FKG and boundary ordering", criterion_8, 120),
        ("9 decay trends", criterion_9, 3600),
        ("10 sweep determinism", criterion_10, 600),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let (pass, detail) = match outcome {
            Ok((ok, detail)) => (ok && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let timing = format!("{:.1}s of {limit}s", elapsed.as_secs_f64());
        println!("{} criterion {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
