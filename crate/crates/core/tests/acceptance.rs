//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line (written to the
//! real stdout so it shows without `--nocapture`) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::Rng as _;
use rand_distr::StandardNormal;

use slb::baselines::{chow_liu_forest, mutual_information, oracle_log_ratio, ChowLiuConfig};
use slb::data::{default_feature_names, stratified_split, Dataset, Label, Matrix};
use slb::density::DensityConfig;
use slb::eval::{cross_validate_method, run_factorial, FactorialResults, MethodConfig, MethodKind};
use slb::features::{build_feature_map_for_pairs, FeatureMapping, Pair};
use slb::hsic::{hsic_permutation_pvalue, hsic_statistic, median_heuristic, KernelSpec};
use slb::svm::{risk_of, train_hinge, train_hinge_ivanov, zero_one_risk, TrainConfig};
use slb::synth::{
    edge_union, forest_oracle_weights, gen_ringnorm, random_forest_bn, Balance, BnSpec, CpdFamily, ExperimentDesign,
    OracleMap, Shared, Structure, RINGNORM_COUNTS, RINGNORM_D,
};
use slb::Rng;

fn report(id: u32, title: &str, pass: bool, detail: &str, elapsed: Duration) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{} criterion {id}: {title} | {detail} | {:.1}s",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let _ = out.flush();
}

fn normal(r: &mut Rng) -> f64 {
    r.sample(StandardNormal)
}

// ---- 1 -------------------------------------------------------------------

fn gauss_gram(v: &[f64], sigma: f64) -> Vec<Vec<f64>> {
    v.iter()
        .map(|a| v.iter().map(|b| (-(a - b) * (a - b) / (2.0 * sigma * sigma)).exp()).collect())
        .collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// (n−1)⁻² tr(K H L H) with explicit matrices.
fn hsic_direct(z: &[f64], w: &[f64], sz: f64, sw: f64) -> f64 {
    let n = z.len();
    let h: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64).collect())
        .collect();
    let k = gauss_gram(z, sz);
    let l = gauss_gram(w, sw);
    let m = matmul(&matmul(&k, &h), &matmul(&l, &h));
    (0..n).map(|i| m[i][i]).sum::<f64>() / ((n - 1) * (n - 1)) as f64
}

fn median_direct(v: &[f64]) -> f64 {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            let x = (v[i] - v[j]).abs();
            if x > 0.0 {
                d.push(x);
            }
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

#[test]
fn criterion_01_hsic_direct_summation() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for s in 0..50u64 {
        let mut r = Rng::new(1000 + s);
        let z: Vec<f64> = (0..20).map(|_| normal(&mut r)).collect();
        let w: Vec<f64> = z.iter().map(|v| (s as f64 / 50.0) * v + normal(&mut r)).collect();
        let (sz, sw) = (median_direct(&z), median_direct(&w));
        assert_eq!(median_heuristic(&z).unwrap(), sz);
        let got = hsic_statistic(&z, &w, &KernelSpec::median(), &KernelSpec::median()).unwrap().statistic;
        let want = hsic_direct(&z, &w, sz, sw);
        worst = worst.max((got - want).abs());
        let got = hsic_statistic(&z, &w, &KernelSpec::fixed(0.8), &KernelSpec::fixed(1.3)).unwrap().statistic;
        worst = worst.max((got - hsic_direct(&z, &w, 0.8, 1.3)).abs());
    }
    let el = t.elapsed();
    let pass = worst <= 1e-10 && el < Duration::from_secs(5);
    report(1, "HSIC equals direct summation", pass, &format!("max abs diff {worst:.2e}"), el);
    assert!(pass);
}

// ---- 2 -------------------------------------------------------------------

#[test]
fn criterion_02_hsic_level() {
    let t = Instant::now();
    let mut rejections = 0;
    for s in 0..200u64 {
        let mut r = Rng::new(2000 + s);
        let z: Vec<f64> = (0..100).map(|_| normal(&mut r)).collect();
        let w: Vec<f64> = (0..100).map(|_| normal(&mut r)).collect();
        let p = hsic_permutation_pvalue(&z, &w, &KernelSpec::median(), &KernelSpec::median(), 199, &Rng::new(s))
            .unwrap()
            .p_value
            .unwrap();
        if p <= 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 200.0;
    let el = t.elapsed();
    let pass = (0.02..=0.09).contains(&rate) && el < Duration::from_secs(120);
    report(2, "HSIC permutation test level", pass, &format!("rejection rate {:.1}%", 100.0 * rate), el);
    assert!(pass);
}

// ---- 3 -------------------------------------------------------------------

#[test]
fn criterion_03_lemma1_exactness() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for s in 0..100u64 {
        let mut r = Rng::new(3000 + s);
        let d = r.random_range(1..=6);
        let density = r.random_range(0.0..=1.0);
        let pos = random_forest_bn(d, density, CpdFamily::Gaussian, &mut r).unwrap();
        let neg = random_forest_bn(d, density, CpdFamily::Gaussian, &mut r).unwrap();
        let pairs = edge_union(&pos, &neg);
        let prior = r.random_range(-1.0..1.0);
        let w = forest_oracle_weights(&neg, &pos, &pairs, prior).unwrap();
        let map = OracleMap::new(&neg, &pos, &pairs).unwrap();
        let x = pos.sample(500, &mut r);
        let x2 = neg.sample(500, &mut r);
        for row in x.iter_rows().chain(x2.iter_rows()) {
            let t = map.map_point(row).unwrap();
            let lin: f64 = w.iter().zip(&t).map(|(a, b)| a * b).sum();
            let direct = oracle_log_ratio(&pos, &neg, prior, row).unwrap();
            worst = worst.max((lin - direct).abs() / direct.abs().max(1.0));
        }
    }
    let el = t.elapsed();
    let pass = worst <= 1e-8 && el < Duration::from_secs(60);
    report(3, "forest log-ratio as linear combination", pass, &format!("max diff {worst:.2e}"), el);
    assert!(pass);
}

// ---- 4 -------------------------------------------------------------------

fn spanning_trees_4() -> Vec<Vec<Pair>> {
    let edges: Vec<Pair> = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).collect();
    let mut trees = Vec::new();
    for mask in 0u32..64 {
        if mask.count_ones() != 3 {
            continue;
        }
        let chosen: Vec<Pair> = (0..6).filter(|k| mask & (1 << k) != 0).map(|k| edges[k]).collect();
        // three edges on four nodes form a tree iff they connect everything
        let mut comp = [0, 1, 2, 3];
        for &(a, b) in &chosen {
            let (ca, cb) = (comp[a], comp[b]);
            for c in comp.iter_mut() {
                if *c == cb {
                    *c = ca;
                }
            }
        }
        if comp.iter().all(|&c| c == comp[0]) {
            trees.push(chosen);
        }
    }
    assert_eq!(trees.len(), 16);
    trees
}

#[test]
fn criterion_04_chow_liu_two_pairs() {
    let t = Instant::now();
    let trees = spanning_trees_4();
    let cfg = ChowLiuConfig::default();
    let names = default_feature_names(4);
    let (mut found, mut agree) = (0, 0);
    for s in 0..100u64 {
        let mut r = Rng::new(4000 + s);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let (a, b) = (normal(&mut r), normal(&mut r));
                vec![a, 0.6 * a + 0.8 * normal(&mut r), b, 0.6 * b + 0.8 * normal(&mut r)]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let tree = chow_liu_forest(&x, &cfg, &names).unwrap();
        if tree.edges.contains(&(0, 1)) && tree.edges.contains(&(2, 3)) {
            found += 1;
        }
        let mi = mutual_information(&x, &cfg, &names).unwrap();
        let weight = |e: &Pair| mi.iter().find(|(p, _)| p == e).unwrap().1;
        let best = trees
            .iter()
            .max_by(|a, b| {
                let wa: f64 = a.iter().map(weight).sum();
                let wb: f64 = b.iter().map(weight).sum();
                wa.total_cmp(&wb)
            })
            .unwrap();
        let mut learned = tree.edges.clone();
        learned.sort_unstable();
        if &learned == best {
            agree += 1;
        }
    }
    let el = t.elapsed();
    let pass = found >= 95 && agree == 100 && el < Duration::from_secs(60);
    report(
        4,
        "Chow-Liu recovers the two dependent pairs",
        pass,
        &format!("both edges in {found}/100, enumeration agreement {agree}/100"),
        el,
    );
    assert!(pass);
}

// ---- 5 -------------------------------------------------------------------

/// Projected gradient ascent on the box-constrained dual
/// `max Σα − ½‖Σ αᵢ yᵢ xᵢ‖²`, `0 ≤ α ≤ 1/(2λn)`; returns primal `w`.
fn reference_svm(x: &Matrix, y: &[Label], lambda: f64) -> Vec<f64> {
    let (n, p) = (x.rows(), x.cols());
    let c = 1.0 / (2.0 * lambda * n as f64);
    let z: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().map(|v| v * y[i].sign()).collect()).collect();
    // Lipschitz constant of the dual gradient: ‖Z‖² ≤ Frobenius²
    let l: f64 = z.iter().flatten().map(|v| v * v).sum();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; p];
    for _ in 0..200_000 {
        for (i, zi) in z.iter().enumerate() {
            let g = 1.0 - zi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            alpha[i] = (alpha[i] + g / l).clamp(0.0, c);
        }
        w.iter_mut().for_each(|v| *v = 0.0);
        for (a, zi) in alpha.iter().zip(&z) {
            for (wk, zk) in w.iter_mut().zip(zi) {
                *wk += a * zk;
            }
        }
    }
    w
}

fn primal(w: &[f64], x: &Matrix, y: &[Label], lambda: f64) -> f64 {
    let n = x.rows() as f64;
    let hinge: f64 = (0..x.rows())
        .map(|i| (1.0 - y[i].sign() * x.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).max(0.0))
        .sum::<f64>()
        / n;
    hinge + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

#[test]
fn criterion_05_svm_solver() {
    let t = Instant::now();
    let (mut worst_rel, mut monotone, mut bounded): (f64, bool, bool) = (0.0, true, true);
    for s in 0..20u64 {
        let mut r = Rng::new(5000 + s);
        let n = r.random_range(20..60);
        let p = r.random_range(2..6);
        let lambda = [0.5, 0.05, 0.005][s as usize % 3];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for k in 0..n {
            let l = if k % 2 == 0 { Label::Pos } else { Label::Neg };
            let mut row: Vec<f64> = (0..p).map(|_| normal(&mut r) + 0.7 * l.sign()).collect();
            row.push(1.0);
            rows.push(row);
            y.push(l);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let m = train_hinge(&x, &y, &TrainConfig::with_lambda(lambda)).unwrap();
        let ours = primal(&m.weights, &x, &y, lambda);
        let theirs = primal(&reference_svm(&x, &y, lambda), &x, &y, lambda);
        worst_rel = worst_rel.max((ours - theirs).abs() / theirs.abs());
        monotone &= m.diagnostics.trace.windows(2).all(|w| w[1] <= w[0]);
        bounded &= zero_one_risk(&m.weights, &x, &y).unwrap() <= risk_of(&m.weights, &x, &y).unwrap();
    }
    let el = t.elapsed();
    let pass = worst_rel <= 1e-3 && monotone && bounded && el < Duration::from_secs(30);
    report(
        5,
        "hinge SVM solver",
        pass,
        &format!("max rel objective diff {worst_rel:.2e}, monotone {monotone}, 0-1 <= hinge {bounded}"),
        el,
    );
    assert!(pass);
}

// ---- 6-8 -----------------------------------------------------------------

fn factorial(structure: Structure, n: usize, methods: &[MethodKind]) -> FactorialResults {
    let d = ExperimentDesign::new(structure, CpdFamily::Gaussian, Balance::Balanced, Shared::None, n);
    run_factorial(&[d], methods, 10, &MethodConfig::default(), &Rng::new(1)).unwrap()
}

fn mean_error(r: &FactorialResults, m: MethodKind) -> (f64, f64) {
    let s = r.summary.iter().find(|s| s.method == m).unwrap();
    (100.0 * s.mean_error, 100.0 * s.sd_error)
}

#[test]
fn criterion_06_forest_gaussian_balanced() {
    let t = Instant::now();
    let r = factorial(Structure::Forest, 1000, &[MethodKind::Slb]);
    let (m, sd) = mean_error(&r, MethodKind::Slb);
    let el = t.elapsed();
    let pass = (2.4..=7.9).contains(&m) && el < Duration::from_secs(900);
    report(
        6,
        "forest/gaussian/balanced n=1000 SLB error in [2.4, 7.9]%",
        pass,
        &format!("SLB {m:.2} ± {sd:.2}% (reference 5.11 ± 1.36)"),
        el,
    );
    assert!(pass);
}

#[test]
fn criterion_07_general_gaussian_balanced() {
    let t = Instant::now();
    let r = factorial(Structure::General, 1000, &[MethodKind::Slb, MethodKind::Nb]);
    let (s, ssd) = mean_error(&r, MethodKind::Slb);
    let (nb, nsd) = mean_error(&r, MethodKind::Nb);
    let el = t.elapsed();
    let pass = s <= 8.0 && s < nb && el < Duration::from_secs(1200);
    report(
        7,
        "general/gaussian/balanced n=1000 SLB <= 8% and below NB",
        pass,
        &format!("SLB {s:.2} ± {ssd:.2}%, NB {nb:.2} ± {nsd:.2}% (reference 3.67 vs 24.8)"),
        el,
    );
    assert!(pass);
}

#[test]
fn criterion_08_screening_ablation() {
    let t = Instant::now();
    let r = factorial(Structure::General, 200, &[MethodKind::Slb, MethodKind::SlbMinus]);
    let (s, ssd) = mean_error(&r, MethodKind::Slb);
    let (m, msd) = mean_error(&r, MethodKind::SlbMinus);
    let el = t.elapsed();
    let pass = s <= m + 0.5 && el < Duration::from_secs(600);
    report(
        8,
        "general n=200 SLB <= SLB-minus + 0.5%",
        pass,
        &format!("SLB {s:.2} ± {ssd:.2}%, SLB-minus {m:.2} ± {msd:.2}%"),
        el,
    );
    assert!(pass);
}

// ---- 9 -------------------------------------------------------------------

#[test]
fn criterion_09_ringnorm() {
    let t = Instant::now();
    let ds = gen_ringnorm(RINGNORM_COUNTS.0, RINGNORM_COUNTS.1, RINGNORM_D, &Rng::new(9)).unwrap();
    let cfg = MethodConfig::default();
    let rng = Rng::new(1);
    let slb = cross_validate_method(&ds, MethodKind::Slb, &cfg, 5, &rng).unwrap();
    let lu = cross_validate_method(&ds, MethodKind::Lu, &cfg, 5, &rng).unwrap();
    let el = t.elapsed();
    let (s, l) = (100.0 * slb.mean_ber, 100.0 * lu.mean_ber);
    let pass = s <= 3.0 && l >= 20.0 && el < Duration::from_secs(600);
    report(
        9,
        "Ringnorm 5-fold CV: SLB BER <= 3%, LU BER >= 20%",
        pass,
        &format!(
            "SLB {s:.2} ± {:.2}%, LU {l:.2} ± {:.2}% (reference 1.4 ± 0.3, 31.8 ± 1.6)",
            100.0 * slb.sd_ber,
            100.0 * lu.sd_ber
        ),
        el,
    );
    assert!(pass);
}

// ---- 10 ------------------------------------------------------------------

fn labelled(pos: &BnSpec, neg: &BnSpec, per_class: usize, r: &mut Rng) -> Dataset {
    let xp = pos.sample(per_class, r);
    let xn = neg.sample(per_class, r);
    let rows: Vec<Vec<f64>> = xp.iter_rows().chain(xn.iter_rows()).map(<[f64]>::to_vec).collect();
    let mut y = vec![Label::Pos; per_class];
    y.extend(vec![Label::Neg; per_class]);
    Dataset::from_matrix(Matrix::from_rows(&rows).unwrap(), y).unwrap()
}

#[test]
fn criterion_10_risk_gap_trend() {
    let t = Instant::now();
    let mut r = Rng::new(10);
    let d = 5;
    let pos = random_forest_bn(d, 1.0, CpdFamily::Gaussian, &mut r).unwrap();
    let neg = random_forest_bn(d, 1.0, CpdFamily::Gaussian, &mut r).unwrap();
    let pairs = edge_union(&pos, &neg);
    let oracle = OracleMap::new(&neg, &pos, &pairs).unwrap();
    let radius = 3.0;
    let cfg = TrainConfig::default();

    let big = labelled(&pos, &neg, 10_000, &mut r.derive(1));
    let w_phi = train_hinge_ivanov(&oracle.map_matrix(big.features()).unwrap(), big.labels(), radius, &cfg)
        .unwrap()
        .weights;
    let test = labelled(&pos, &neg, 2_500, &mut r.derive(2));
    let oracle_risk = risk_of(&w_phi, &oracle.map_matrix(test.features()).unwrap(), test.labels()).unwrap();

    let mut gaps = Vec::new();
    for (k, n) in [200usize, 800, 3200].into_iter().enumerate() {
        let mut total = 0.0;
        for s in 0..10u64 {
            let rng = Rng::new(100 * k as u64 + s);
            let train = labelled(&pos, &neg, n / 2, &mut rng.derive(0));
            let (i0, i1) = stratified_split(&train, 0.5, &rng.derive(1)).unwrap();
            let (d0, d1) = (train.subset(&i0), train.subset(&i1));
            let map = build_feature_map_for_pairs(&d0, &pairs, &DensityConfig::default()).unwrap();
            let w_hat = train_hinge_ivanov(&map.map_matrix(d1.features()).unwrap(), d1.labels(), radius, &cfg)
                .unwrap()
                .weights;
            let risk = risk_of(&w_hat, &map.map_matrix(test.features()).unwrap(), test.labels()).unwrap();
            total += risk - oracle_risk;
        }
        gaps.push(total / 10.0);
    }
    let el = t.elapsed();
    let pass = gaps.windows(2).all(|w| w[1] <= w[0]);
    report(
        10,
        "risk gap to the oracle is non-increasing in n",
        pass,
        &format!("gaps at n=200/800/3200: {:.4} / {:.4} / {:.4}", gaps[0], gaps[1], gaps[2]),
        el,
    );
    assert!(pass);
}
