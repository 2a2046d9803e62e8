//! Acceptance suite: one PASS/FAIL line per criterion, each checked against
//! an independent oracle (grids, closed forms, synthesized moments).
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` are still run and reported, but
//! do not fail the process; the reason is printed next to the result.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use polypareto::jm::{self, JmOptions};
use polypareto::lasserre::{self, HierarchyOptions};
use polypareto::moment::{extract_atoms, flat_truncation, ExtractionConfig, TruncatedMomentSequence, DEFAULT_RANK_RATIO};
use polypareto::pipeline::{sweep, ProblemSpec, SweepConfig, SweepResult};
use polypareto::poly::{basis, Monomial, MonomialIndex, Polynomial, VarList};
use polypareto::sdp::{self, export_sdpa, import_sdpa, Equality, LmiBlock, SdpProblem, SdpSettings};
use polypareto::semialg::{SetDescriptor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(criterion id, reason)` for checks that cannot pass on the stated data.
const KNOWN_UNATTAINABLE: &[(&str, &str)] = &[(
    "2b",
    "target coefficients correspond to inf_v g = 1 - x1^2 - x2^2, but for V = [1, sqrt(2)]^2 \
     the exact lower value function is 1 - 2 x1^2 - 2 x2^2",
)];

struct Line {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Report {
    lines: Vec<Line>,
}

impl Report {
    fn record(&mut self, id: &'static str, title: &'static str, pass: bool, detail: String) {
        let known = KNOWN_UNATTAINABLE.iter().find(|(k, _)| *k == id);
        let tag = match (pass, known) {
            (true, _) => "PASS",
            (false, Some(_)) => "FAIL (known)",
            (false, None) => "FAIL",
        };
        println!("criterion {id:<3} {tag:<12} {title}: {detail}");
        if let (false, Some((_, why))) = (pass, known) {
            println!("              reason: {why}");
        }
        self.lines.push(Line {
            id,
            title,
            pass,
            detail,
        });
    }

    fn error(&mut self, id: &'static str, title: &'static str, e: impl std::fmt::Display) {
        self.record(id, title, false, format!("error: {e}"));
    }
}

/// One produced approximation with the function it bounds.
struct Bounded {
    label: String,
    poly: Polynomial,
    f: Polynomial,
    x: SetDescriptor,
    param: SetDescriptor,
    upper: bool,
}

fn sample(set: &SetDescriptor, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match set.shape() {
        Shape::Box { lower, upper } => lower
            .iter()
            .zip(upper)
            .map(|(l, u)| if l == u { *l } else { rng.random_range(*l..*u) })
            .collect(),
        Shape::Ball { center, radius } => loop {
            let p: Vec<f64> = center.iter().map(|c| c + rng.random_range(-radius..*radius)).collect();
            let d: f64 = p.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
            if d <= radius * radius {
                break p;
            }
        },
        Shape::General => panic!("sampling needs a box or ball"),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Nondominated subset of 2-D points (minimization).
fn front2(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut best = f64::INFINITY;
    for p in pts {
        if p.1 < best {
            best = p.1;
            out.push(p);
        }
    }
    out
}

fn sup_dist(front: &[(f64, f64)], r: &[f64]) -> f64 {
    front
        .iter()
        .map(|q| (q.0 - r[0]).abs().max((q.1 - r[1]).abs()))
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// problem data
// ---------------------------------------------------------------------------

struct Example1 {
    spec: ProblemSpec,
    x: SetDescriptor,
    u: SetDescriptor,
    v: SetDescriptor,
    f1: Polynomial,
    f2: Polynomial,
    g: Polynomial,
}

fn example1_with_v(vlo: f64, vhi: f64) -> Example1 {
    let xv = VarList::new([("x", vec!["x1", "x2"])]).unwrap();
    let uv = VarList::new([("u", vec!["u"])]).unwrap();
    let vv = VarList::new([("v", vec!["v1", "v2"])]).unwrap();
    let x = SetDescriptor::new_ball(&xv, vec![0.0, 0.0], 2f64.sqrt()).unwrap();
    let u = SetDescriptor::new_box(&uv, vec![0.0], vec![1.0]).unwrap();
    let v = SetDescriptor::new_box(&vv, vec![vlo; 2], vec![vhi; 2]).unwrap();
    let xu = xv.concat(&uv).unwrap();
    let xvv = xv.concat(&vv).unwrap();
    let f1 = Polynomial::parse(&xu, "x1^2*u^2 + x2^2*u").unwrap();
    let f2 = Polynomial::parse(&xu, "-x1^4 - 2*x1^2*x2^2 - x2^4 + x1^2 - u^2").unwrap();
    let g = Polynomial::parse(&xvv, "-x1^2*v2^2 - x2^2*v1^2 + 1").unwrap();
    let spec = ProblemSpec::new(x.clone(), Some(u.clone()), Some(v.clone()), vec![f1.clone(), f2.clone()], vec![g.clone()])
        .unwrap();
    Example1 {
        spec,
        x,
        u,
        v,
        f1,
        f2,
        g,
    }
}

fn example1() -> Example1 {
    example1_with_v(1.0, 2f64.sqrt())
}

// closed forms used only by the grid oracles
fn ex1_f1(x1: f64, x2: f64, u: f64) -> f64 {
    x1 * x1 * u * u + x2 * x2 * u
}
fn ex1_f2(x1: f64, x2: f64, u: f64) -> f64 {
    let r2 = x1 * x1 + x2 * x2;
    -r2 * r2 + x1 * x1 - u * u
}
fn ex1_g(x1: f64, x2: f64, v1: f64, v2: f64) -> f64 {
    -x1 * x1 * v2 * v2 - x2 * x2 * v1 * v1 + 1.0
}

/// Robust objective values of grid points of the robust feasible set.
fn example1_oracle() -> Vec<(f64, f64)> {
    let r = 2f64.sqrt();
    let us = linspace(0.0, 1.0, 101);
    let vs = linspace(1.0, r, 20);
    let mut pts = Vec::new();
    for &a in &linspace(-r, r, 400) {
        for &b in &linspace(-r, r, 400) {
            if a * a + b * b > 2.0 {
                continue;
            }
            let gmin = vs
                .iter()
                .flat_map(|&v1| vs.iter().map(move |&v2| ex1_g(a, b, v1, v2)))
                .fold(f64::INFINITY, f64::min);
            if gmin < 0.0 {
                continue;
            }
            let f1 = us.iter().map(|&u| ex1_f1(a, b, u)).fold(f64::NEG_INFINITY, f64::max);
            let f2 = us.iter().map(|&u| ex1_f2(a, b, u)).fold(f64::NEG_INFINITY, f64::max);
            pts.push((f1, f2));
        }
    }
    pts
}

fn example2() -> ProblemSpec {
    let v = VarList::new([("x", vec!["x1", "x2"])]).unwrap();
    let x = SetDescriptor::new_box(&v, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let f1 = Polynomial::parse(&v, "x1 + x2").unwrap();
    let f2 = Polynomial::parse(&v, "-x1^2 + 2*x1*x2 + 0.5*x1 + 0.5*x2 - 0.0625").unwrap();
    let g = Polynomial::parse(&v, "x1^2 + x2^2 + 2*x1*x2 - x1 - x2").unwrap();
    ProblemSpec::new(x, None, None, vec![f1, f2], vec![g]).unwrap()
}

fn example2_oracle() -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for &a in &linspace(0.0, 1.0, 400) {
        for &b in &linspace(0.0, 1.0, 400) {
            let s = a + b;
            if s * s - s < 0.0 {
                continue;
            }
            pts.push((s, -a * a + 2.0 * a * b + 0.5 * s - 0.0625));
        }
    }
    pts
}

fn ideal(pts: &[(f64, f64)]) -> (f64, f64) {
    pts.iter()
        .fold((f64::INFINITY, f64::INFINITY), |(a, b), p| (a.min(p.0), b.min(p.1)))
}

fn collect_sweep(spec: &ProblemSpec, res: &SweepResult, tag: &str, out: &mut Vec<Bounded>) {
    for a in &res.approximations {
        for (i, d) in a.f_details.iter().enumerate() {
            if let Some(d) = d {
                out.push(Bounded {
                    label: format!("{tag} Fbar_{}", i + 1),
                    poly: d.poly.clone(),
                    f: spec.objectives()[i].clone(),
                    x: spec.x_set().clone(),
                    param: spec.u_set().unwrap().clone(),
                    upper: true,
                });
            }
        }
        for (j, d) in a.g_details.iter().enumerate() {
            if let Some(d) = d {
                out.push(Bounded {
                    label: format!("{tag} Gbar_{}", j + 1),
                    poly: d.poly.clone(),
                    f: spec.constraints()[j].clone(),
                    x: spec.x_set().clone(),
                    param: spec.v_set().unwrap().clone(),
                    upper: false,
                });
            }
        }
    }
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

fn criterion1(rep: &mut Report, bounded: &mut Vec<Bounded>) {
    const T: &str = "Example 1 F1 recovery (d = 2, order <= 7, < 60 s)";
    let e = example1();
    let start = Instant::now();
    let lo = jm::min_order(&e.f1, &e.x, &e.u, 2);
    let mut found = None;
    for order in lo..=7 {
        let a = match jm::upper_value_approx(&e.f1, &e.x, &e.u, 2, order, &JmOptions::default()) {
            Ok(a) => a,
            Err(err) => return rep.error("1", T, err),
        };
        let xv = e.x.vars();
        let mut dev: f64 = 0.0;
        for m in basis(2, 2) {
            let want = if m.degree() == 2 && m.exponents().contains(&2) { 1.0 } else { 0.0 };
            dev = dev.max((a.poly.coefficient(&m) - want).abs());
        }
        bounded.push(Bounded {
            label: format!("F1bar order {order}"),
            poly: a.poly.remap(xv).unwrap(),
            f: e.f1.clone(),
            x: e.x.clone(),
            param: e.u.clone(),
            upper: true,
        });
        if dev <= 1e-2 {
            found = Some((order, dev, a.poly.to_string()));
            break;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    match found {
        Some((order, dev, p)) => rep.record(
            "1",
            T,
            secs < 60.0,
            format!("order {order}, max coefficient error {dev:.2e}, {secs:.2} s, Fbar = {p}"),
        ),
        None => rep.record("1", T, false, format!("no order <= 7 within 1e-2 ({secs:.2} s)")),
    }
}

fn lower_g(e: &Example1) -> Result<jm::ValueApprox, jm::JmError> {
    let order = jm::default_order(&e.g, &e.x, &e.v, 2);
    jm::lower_value_approx(&e.g, &e.x, &e.v, 2, order, &JmOptions::default())
}

fn criterion2(rep: &mut Report, bounded: &mut Vec<Bounded>) {
    const TA: &str = "Example 1 G lower bound, Gbar <= 1 - x1^2 - x2^2 + 1e-6 on a 100x100 grid of X";
    const TB: &str = "Example 1 G coefficients within 0.05 of (-0.9877, -0.9875, 0.9764)";
    let e = example1();
    let a = match lower_g(&e) {
        Ok(a) => a,
        Err(err) => {
            rep.error("2a", TA, &err);
            return rep.error("2b", TB, err);
        }
    };
    let r = 2f64.sqrt();
    let mut worst = f64::NEG_INFINITY;
    for &x1 in &linspace(-r, r, 100) {
        for &x2 in &linspace(-r, r, 100) {
            if x1 * x1 + x2 * x2 > 2.0 {
                continue;
            }
            let v = a.poly.eval(&[x1, x2]).unwrap() - (1.0 - x1 * x1 - x2 * x2);
            worst = worst.max(v);
        }
    }
    rep.record("2a", TA, worst <= 1e-6, format!("max excess {worst:.3e}, Gbar = {}", a.poly));

    let coef = |p: &Polynomial, e: [u32; 2]| p.coefficient(&Monomial::new(e.to_vec()));
    let got = [coef(&a.poly, [2, 0]), coef(&a.poly, [0, 2]), coef(&a.poly, [0, 0])];
    let want = [-0.9877, -0.9875, 0.9764];
    let dev = got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    rep.record(
        "2b",
        TB,
        dev <= 0.05,
        format!("got ({:.4}, {:.4}, {:.4}), max deviation {dev:.4}", got[0], got[1], got[2]),
    );
    bounded.push(Bounded {
        label: "Gbar e=2".into(),
        poly: a.poly.clone(),
        f: e.g.clone(),
        x: e.x.clone(),
        param: e.v.clone(),
        upper: false,
    });

    // the same computation with V = [0, 1]^2, whose lower value function is
    // exactly 1 - x1^2 - x2^2
    let alt = example1_with_v(0.0, 1.0);
    if let Ok(b) = lower_g(&alt) {
        let got = [coef(&b.poly, [2, 0]), coef(&b.poly, [0, 2]), coef(&b.poly, [0, 0])];
        println!(
            "              diagnostic: with V = [0,1]^2 the coefficients are ({:.4}, {:.4}, {:.4})",
            got[0], got[1], got[2]
        );
        bounded.push(Bounded {
            label: "Gbar e=2, V=[0,1]^2".into(),
            poly: b.poly,
            f: alt.g.clone(),
            x: alt.x.clone(),
            param: alt.v.clone(),
            upper: false,
        });
    }
}

struct FrontRuns {
    ex1: Option<SweepResult>,
    ex1_oracle: Vec<(f64, f64)>,
    ex2: Option<SweepResult>,
    ex2_oracle: Vec<(f64, f64)>,
}

fn criterion3(rep: &mut Report, bounded: &mut Vec<Bounded>, runs: &mut FrontRuns) {
    const T: &str = "Example 1 front: >= 20 certified records within 0.05 of the grid front, < 30 min";
    let e = example1();
    let start = Instant::now();
    let res = match sweep(&e.spec, &SweepConfig::defaults(&e.spec)) {
        Ok(r) => r,
        Err(err) => return rep.error("3", T, err),
    };
    let secs = start.elapsed().as_secs_f64();
    let front = front2(runs.ex1_oracle.clone());
    let certified: Vec<_> = res.records.iter().filter(|r| r.certified).collect();
    let worst = certified
        .iter()
        .map(|r| sup_dist(&front, &r.robust_values))
        .fold(0.0, f64::max);
    let on_curve = front.iter().map(|q| (q.1 + q.0 * q.0).abs()).fold(0.0, f64::max);
    rep.record(
        "3",
        T,
        certified.len() >= 20 && worst <= 0.05 && secs < 1800.0,
        format!(
            "{} certified of {}, max sup-distance {worst:.2e}, grid front deviates {on_curve:.1e} from v2 = -v1^2, {secs:.1} s",
            certified.len(),
            res.records.len()
        ),
    );
    collect_sweep(&e.spec, &res, "Example 1 sweep", bounded);
    runs.ex1 = Some(res);
}

fn criterion4(rep: &mut Report, runs: &mut FrontRuns) {
    const T: &str = "Example 2 front: certified records nondominated within 0.02 against the grid";
    let spec = example2();
    let res = match sweep(&spec, &SweepConfig::defaults(&spec)) {
        Ok(r) => r,
        Err(err) => return rep.error("4", T, err),
    };
    let front = front2(runs.ex2_oracle.clone());
    let tol = 0.02;
    let certified: Vec<_> = res.records.iter().filter(|r| r.certified).collect();
    let mut dominated = 0;
    let mut worst: f64 = 0.0;
    for r in &certified {
        let v = &r.robust_values;
        if front.iter().any(|q| q.0 <= v[0] && q.1 <= v[1] && (q.0 < v[0] - tol || q.1 < v[1] - tol)) {
            dominated += 1;
        }
        worst = worst.max(sup_dist(&front, v));
    }
    rep.record(
        "4",
        T,
        !certified.is_empty() && dominated == 0,
        format!(
            "{} certified of {}, {dominated} dominated, max sup-distance to grid front {worst:.2e}",
            certified.len(),
            res.records.len()
        ),
    );
    runs.ex2 = Some(res);
}

fn criterion5(rep: &mut Report) {
    const T: &str = "Lasserre unit suite";
    let opts = HierarchyOptions::default();
    let mut notes = Vec::new();
    let mut ok = true;

    let v1 = VarList::standard(1);
    let k1 = SetDescriptor::new_box(&v1, vec![-1.0], vec![1.0]).unwrap();
    match lasserre::minimize(&Polynomial::parse(&v1, "x1^2").unwrap(), &k1, &opts) {
        Ok(r) => {
            let xerr = r.minimizers.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
            let pass = r.bound.abs() <= 1e-7 && r.certified && xerr <= 1e-4;
            ok &= pass;
            notes.push(format!("x^2: bound {:.1e}, minimizer error {xerr:.1e}", r.bound));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("x^2: {e}"));
        }
    }

    let v2 = VarList::standard(2);
    let mut k2 = SetDescriptor::new_box(&v2, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    k2.add_inequality(Polynomial::parse(&v2, "x1 + x2 - 1").unwrap()).unwrap();
    match lasserre::minimize(&Polynomial::parse(&v2, "x1^2 + x2^2").unwrap(), &k2, &opts) {
        Ok(r) => {
            let xerr = r
                .minimizers
                .iter()
                .map(|p| (p[0] - 0.5).abs().max((p[1] - 0.5).abs()))
                .fold(0.0, f64::max);
            let pass = (r.bound - 0.5).abs() <= 1e-6 && r.certified && xerr <= 1e-4;
            ok &= pass;
            notes.push(format!("halfplane: bound {:.9}, minimizer error {xerr:.1e}", r.bound));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("halfplane: {e}"));
        }
    }

    let disk = SetDescriptor::new_ball(&v2, vec![0.0, 0.0], 1.0).unwrap();
    let f = Polynomial::parse(&v2, "-x1^4 - 2*x1^2*x2^2 - x2^4 + x1^2").unwrap();
    match lasserre::minimize(&f, &disk, &opts) {
        Ok(r) => {
            let mut pts = r.minimizers.clone();
            pts.sort_by(|a, b| a[1].total_cmp(&b[1]));
            let targets = [[0.0, -1.0], [0.0, 1.0]];
            let xerr = if pts.len() == 2 {
                pts.iter()
                    .zip(targets)
                    .map(|(p, t)| (p[0] - t[0]).abs().max((p[1] - t[1]).abs()))
                    .fold(0.0, f64::max)
            } else {
                f64::INFINITY
            };
            let pass = (r.bound + 1.0).abs() <= 1e-5 && r.certified && xerr <= 1e-3;
            ok &= pass;
            notes.push(format!("F2 on disk: bound {:.7}, {} minimizers, error {xerr:.1e}", r.bound, pts.len()));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("F2 on disk: {e}"));
        }
    }
    rep.record("5", T, ok, notes.join("; "));
}

/// Moments of a weighted sum of Diracs, computed directly.
fn synth(n: usize, degree: usize, atoms: &[(Vec<f64>, f64)]) -> TruncatedMomentSequence {
    let idx = MonomialIndex::new(n, degree);
    let values = idx
        .monomials()
        .iter()
        .map(|m| {
            atoms
                .iter()
                .map(|(p, w)| w * m.exponents().iter().zip(p).map(|(&e, x)| x.powi(e as i32)).product::<f64>())
                .sum()
        })
        .collect();
    TruncatedMomentSequence::with_index(Arc::new(idx), values).unwrap()
}

fn criterion6(rep: &mut Report) {
    const T: &str = "extraction suite: atoms and weights to 1e-6, correct flat (t, r)";
    let cases: Vec<(usize, Vec<(Vec<f64>, f64)>, (usize, usize))> = vec![
        (2, vec![(vec![0.3, -0.7], 1.0)], (1, 1)),
        (2, vec![(vec![0.3, -0.7], 0.4), (vec![-0.5, 0.2], 0.6)], (2, 2)),
        (
            2,
            vec![(vec![0.1, 0.2], 0.2), (vec![-0.6, 0.4], 0.3), (vec![0.5, -0.3], 0.5)],
            (2, 3),
        ),
        (
            3,
            vec![
                (vec![0.1, 0.2, -0.4], 0.25),
                (vec![-0.6, 0.4, 0.3], 0.35),
                (vec![0.5, -0.3, 0.8], 0.4),
            ],
            (2, 3),
        ),
    ];
    let mut ok = true;
    let mut worst_pos: f64 = 0.0;
    let mut worst_w: f64 = 0.0;
    let mut notes = Vec::new();
    for (n, atoms, want) in &cases {
        let y = synth(*n, 4, atoms);
        let got = flat_truncation(&y, 1, DEFAULT_RANK_RATIO);
        if got != Some(*want) {
            ok = false;
            notes.push(format!("{} atoms: flat truncation {got:?}, expected {want:?}", atoms.len()));
            continue;
        }
        let m = match extract_atoms(&y, want.0, want.1, &ExtractionConfig::default()) {
            Ok(m) => m,
            Err(e) => {
                ok = false;
                notes.push(format!("{} atoms: {e}", atoms.len()));
                continue;
            }
        };
        if m.atoms.len() != atoms.len() {
            ok = false;
            continue;
        }
        for (p, w) in atoms {
            let (dp, dw) = m
                .atoms
                .iter()
                .map(|(q, v)| {
                    let d = p.iter().zip(q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    (d, (w - v).abs())
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            worst_pos = worst_pos.max(dp);
            worst_w = worst_w.max(dw);
        }
    }
    ok &= worst_pos <= 1e-6 && worst_w <= 1e-6;
    notes.insert(
        0,
        format!("{} cases, position error {worst_pos:.1e}, weight error {worst_w:.1e}", cases.len()),
    );
    rep.record("6", T, ok, notes.join("; "));
}

fn criterion7(rep: &mut Report, bounded: &[Bounded]) {
    const T: &str = "bound dominance: 100 seeded samples per approximation";
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut worst_label = String::new();
    for b in bounded {
        let joint = b.x.vars().concat(b.param.vars()).unwrap();
        let f = b.f.remap(&joint).unwrap();
        let poly = b.poly.remap(b.x.vars()).unwrap();
        for _ in 0..100 {
            let xs = sample(&b.x, &mut rng);
            let ps = sample(&b.param, &mut rng);
            let mut z = xs.clone();
            z.extend(&ps);
            let a = poly.eval(&xs).unwrap();
            let v = f.eval(&z).unwrap();
            let violation = if b.upper { v - a } else { a - v };
            if violation > worst {
                worst = violation;
                worst_label = b.label.clone();
            }
        }
    }
    rep.record(
        "7",
        T,
        !bounded.is_empty() && worst <= 1e-6,
        format!(
            "{} approximations, worst violation {worst:.2e} ({worst_label})",
            bounded.len()
        ),
    );
}

fn criterion8(rep: &mut Report, runs: &FrontRuns) {
    const T: &str = "utopia validity: y_U strictly below the grid ideal point";
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, res, oracle) in [
        ("Example 1", &runs.ex1, &runs.ex1_oracle),
        ("Example 2", &runs.ex2, &runs.ex2_oracle),
    ] {
        let Some(res) = res else {
            ok = false;
            notes.push(format!("{name}: no sweep result"));
            continue;
        };
        let yi = ideal(oracle);
        let yu = &res.utopia.y_u;
        let pass = yu[0] < yi.0 && yu[1] < yi.1;
        ok &= pass;
        notes.push(format!(
            "{name}: y_U = ({:.4}, {:.4}) vs y_I = ({:.4}, {:.4})",
            yu[0], yu[1], yi.0, yi.1
        ));
    }
    rep.record("8", T, ok, notes.join("; "));
}

fn analytic_sdps() -> Vec<(&'static str, SdpProblem, f64)> {
    let two = SdpProblem {
        num_vars: 1,
        objective: vec![1.0],
        blocks: vec![LmiBlock::from_triplets(
            2,
            [(None, 0, 1, 1.0), (Some(0), 0, 0, 1.0), (Some(0), 1, 1, 1.0)],
        )],
        equalities: vec![],
    };
    let diag = SdpProblem {
        num_vars: 2,
        objective: vec![1.0, 1.0],
        blocks: vec![LmiBlock::from_triplets(
            2,
            [
                (None, 0, 0, -1.0),
                (None, 1, 1, -1.0),
                (Some(0), 0, 0, 1.0),
                (Some(1), 1, 1, 1.0),
            ],
        )],
        equalities: vec![],
    };
    // Gram matrix of (x - 1)^2 in the basis (1, x): minimize its trace
    let gram = SdpProblem {
        num_vars: 3,
        objective: vec![1.0, 0.0, 1.0],
        blocks: vec![LmiBlock::from_triplets(
            2,
            [(Some(0), 0, 0, 1.0), (Some(1), 0, 1, 1.0), (Some(2), 1, 1, 1.0)],
        )],
        equalities: vec![
            Equality {
                coeffs: vec![1.0, 0.0, 0.0],
                rhs: 1.0,
            },
            Equality {
                coeffs: vec![0.0, 2.0, 0.0],
                rhs: -2.0,
            },
            Equality {
                coeffs: vec![0.0, 0.0, 1.0],
                rhs: 1.0,
            },
        ],
    };
    vec![("[[y,1],[1,y]]", two, 1.0), ("diag", diag, 2.0), ("Gram", gram, 2.0)]
}

fn criterion9(rep: &mut Report) {
    const T: &str = "SDP suite: analytic optima to 1e-7, exact SDPA round trip";
    let mut ok = true;
    let mut notes = Vec::new();
    let mut problems = analytic_sdps();
    let v = VarList::standard(2);
    let disk = SetDescriptor::new_ball(&v, vec![0.0, 0.0], 1.0).unwrap();
    let f = Polynomial::parse(&v, "-x1^4 - 2*x1^2*x2^2 - x2^4 + x1^2").unwrap();
    let relax = lasserre::relax(&f, &disk, 3).unwrap();
    problems.push(("moment relaxation", relax.problem, f64::NAN));
    for (name, p, want) in &problems {
        if want.is_finite() {
            match sdp::solve(p, &SdpSettings::default()) {
                Ok(s) => {
                    let err = (s.primal_objective - want).abs();
                    ok &= err <= 1e-7;
                    notes.push(format!("{name}: error {err:.1e}"));
                }
                Err(e) => {
                    ok = false;
                    notes.push(format!("{name}: {e}"));
                }
            }
        }
        let text = export_sdpa(p);
        let back = import_sdpa(&text);
        let exact = back.as_ref().is_ok_and(|b| b == p && export_sdpa(b) == text);
        ok &= exact;
        if !exact {
            notes.push(format!("{name}: round trip differs"));
        }
    }
    notes.push(format!("{} round trips", problems.len()));
    rep.record("9", T, ok, notes.join("; "));
}

fn criterion10(rep: &mut Report, bounded: &mut Vec<Bounded>) {
    // Lasserre bounds in the order
    {
        const T: &str = "Lasserre bounds nondecreasing in the order (tol 1e-7)";
        // order 1 gives -1.5, the minimum is -1
        let v = VarList::standard(3);
        let cube = SetDescriptor::new_box(&v, vec![-1.0; 3], vec![1.0; 3]).unwrap();
        let f = Polynomial::parse(&v, "x1*x2 + x2*x3 + x1*x3").unwrap();
        let mut bounds = Vec::new();
        let mut err = None;
        for t in 1..=4 {
            match lasserre::relax(&f, &cube, t).map(|r| sdp::solve(&r.problem, &SdpSettings::default())) {
                Ok(Ok(s)) => bounds.push(s.primal_objective),
                Ok(Err(e)) => err = Some(e.to_string()),
                Err(e) => err = Some(e.to_string()),
            }
        }
        let ok = err.is_none() && bounds.windows(2).all(|w| w[1] >= w[0] - 1e-7);
        let list: Vec<String> = bounds.iter().map(|b| format!("{b:.8}")).collect();
        rep.record("10a", T, ok, format!("orders 1..4: [{}] {}", list.join(", "), err.unwrap_or_default()));
    }

    let e = example1();
    let opts = JmOptions::default();
    let push = |bounded: &mut Vec<Bounded>, label: String, a: &jm::ValueApprox, f: &Polynomial| {
        bounded.push(Bounded {
            label,
            poly: a.poly.clone(),
            f: f.clone(),
            x: e.x.clone(),
            param: e.u.clone(),
            upper: true,
        });
    };

    // jm integral in d and in the order
    {
        const T: &str = "jm Upper integral nonincreasing in d and in the order (tol 1e-7)";
        let mut ok = true;
        let mut notes = Vec::new();
        for (name, f) in [("f1", &e.f1), ("f2", &e.f2)] {
            let mut by_d = Vec::new();
            for d in [2, 4, 6] {
                match jm::upper_value_approx(f, &e.x, &e.u, d, 4, &opts) {
                    Ok(a) => {
                        by_d.push(a.integral);
                        push(bounded, format!("{name} d={d} order 4"), &a, f);
                    }
                    Err(err) => {
                        ok = false;
                        notes.push(format!("{name} d={d}: {err}"));
                    }
                }
            }
            let mut by_order = Vec::new();
            for order in 2..=5 {
                match jm::upper_value_approx(f, &e.x, &e.u, 2, order, &opts) {
                    Ok(a) => {
                        by_order.push(a.integral);
                        push(bounded, format!("{name} d=2 order {order}"), &a, f);
                    }
                    Err(err) => {
                        ok = false;
                        notes.push(format!("{name} order {order}: {err}"));
                    }
                }
            }
            ok &= by_d.windows(2).all(|w| w[1] <= w[0] + 1e-7);
            ok &= by_order.windows(2).all(|w| w[1] <= w[0] + 1e-7);
            let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ");
            notes.push(format!("{name}: by d [{}], by order [{}]", fmt(&by_d), fmt(&by_order)));
        }
        rep.record("10b", T, ok, notes.join("; "));
    }

    // Monte Carlo L1 error in d
    {
        const T: &str = "Monte Carlo L1 error of Upper approximations nonincreasing in d (3 sigma)";
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| sample(&e.x, &mut rng)).collect();
        let us = linspace(0.0, 1.0, 201);
        let mut ok = true;
        let mut notes = Vec::new();
        for (name, f, closed) in [
            ("f2", &e.f2, ex1_f2 as fn(f64, f64, f64) -> f64),
            ("f1", &e.f1, ex1_f1 as fn(f64, f64, f64) -> f64),
        ] {
            let truth: Vec<f64> = xs
                .iter()
                .map(|p| us.iter().map(|&u| closed(p[0], p[1], u)).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let mut errors: Vec<Vec<f64>> = Vec::new();
            for d in [2, 4, 6] {
                let order = jm::default_order(f, &e.x, &e.u, d);
                match jm::upper_value_approx(f, &e.x, &e.u, d, order, &opts) {
                    Ok(a) => {
                        let p = a.poly.remap(e.x.vars()).unwrap();
                        errors.push(
                            xs.iter()
                                .zip(&truth)
                                .map(|(x, t)| (p.eval(x).unwrap() - t).abs())
                                .collect(),
                        );
                        push(bounded, format!("{name} d={d} order {order}"), &a, f);
                    }
                    Err(err) => {
                        ok = false;
                        notes.push(format!("{name} d={d}: {err}"));
                    }
                }
            }
            let means: Vec<f64> = errors.iter().map(|e| e.iter().sum::<f64>() / n as f64).collect();
            for w in errors.windows(2) {
                let diff: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
                let m = diff.iter().sum::<f64>() / n as f64;
                let var = diff.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                ok &= m <= 3.0 * (var / n as f64).sqrt();
            }
            let list: Vec<String> = means.iter().map(|m| format!("{m:.5}")).collect();
            notes.push(format!("{name} mean |Fbar - F| for d = 2, 4, 6: [{}]", list.join(", ")));
        }
        rep.record("10c", T, ok, notes.join("; "));
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut rep = Report::default();
    let mut bounded = Vec::new();
    let mut runs = FrontRuns {
        ex1: None,
        ex1_oracle: example1_oracle(),
        ex2: None,
        ex2_oracle: example2_oracle(),
    };
    criterion1(&mut rep, &mut bounded);
    criterion2(&mut rep, &mut bounded);
    criterion3(&mut rep, &mut bounded, &mut runs);
    criterion4(&mut rep, &mut runs);
    criterion5(&mut rep);
    criterion6(&mut rep);
    criterion8(&mut rep, &runs);
    criterion9(&mut rep);
    criterion10(&mut rep, &mut bounded);
    criterion7(&mut rep, &bounded);

    let unexpected: Vec<&Line> = rep
        .lines
        .iter()
        .filter(|l| !l.pass && !KNOWN_UNATTAINABLE.iter().any(|(k, _)| *k == l.id))
        .collect();
    let passed = rep.lines.iter().filter(|l| l.pass).count();
    println!(
        "acceptance: {passed}/{} checks passed, {} known-unattainable, {} unexpected failures ({:.1} s)",
        rep.lines.len(),
        rep.lines.iter().filter(|l| !l.pass).count() - unexpected.len(),
        unexpected.len(),
        start.elapsed().as_secs_f64()
    );
    for l in &unexpected {
        println!("unexpected failure: criterion {} ({}): {}", l.id, l.title, l.detail);
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
