//! Naive dense reference implementations and random instance generators.
//!
//! Everything here works on explicit N×N or N_g×N_g matrices and refits
//! from raw data, so it shares no code path with the library under test.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A regression problem with contiguous clusters `0..G`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub clusters: Vec<usize>,
}

impl Instance {
    pub fn groups(&self) -> Vec<Vec<usize>> {
        groups(&self.clusters)
    }

    pub fn g(&self) -> usize {
        self.groups().len()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Observation indices of each cluster, clusters numbered by first appearance.
pub fn groups(assign: &[usize]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = Vec::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &c) in assign.iter().enumerate() {
        match order.iter().position(|&o| o == c) {
            Some(p) => out[p].push(i),
            None => {
                order.push(c);
                out.push(vec![i]);
            }
        }
    }
    out
}

/// Random cluster sizes (each at least `min_size`) summing to `n`.
pub fn random_sizes(rng: &mut impl Rng, n: usize, g: usize, min_size: usize) -> Vec<usize> {
    assert!(n >= g * min_size);
    let mut sizes = vec![min_size; g];
    for _ in 0..(n - g * min_size) {
        sizes[rng.random_range(0..g)] += 1;
    }
    sizes
}

/// Intercept plus `k-1` standard normal columns with cluster-level shifts,
/// heteroskedastic cluster-correlated errors.
pub fn random_instance(seed: u64, n: usize, g: usize, k: usize) -> Instance {
    let mut r = rng(seed);
    let sizes = random_sizes(&mut r, n, g, 1);
    let clusters: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat_n(c, s)).collect();
    let shifts: Vec<f64> = (0..g).map(|_| normal(&mut r)).collect();
    let effects: Vec<f64> = (0..g).map(|_| normal(&mut r)).collect();
    let mut x = DMatrix::zeros(n, k);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..k {
            x[(i, j)] = normal(&mut r) + 0.5 * shifts[clusters[i]] * j as f64;
        }
    }
    let beta: Vec<f64> = (0..k).map(|j| 0.5 - 0.25 * j as f64).collect();
    let y = DVector::from_fn(n, |i, _| {
        let xb: f64 = (0..k).map(|j| x[(i, j)] * beta[j]).sum();
        let scale = 1.0 + 0.5 * x[(i, k.min(2) - 1)].abs();
        xb + effects[clusters[i]] + scale * normal(&mut r)
    });
    Instance { y, x, clusters }
}

pub fn ols(y: &DVector<f64>, x: &DMatrix<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let a = (x.transpose() * x).try_inverse()?;
    let beta = &a * x.transpose() * y;
    let resid = y - x * &beta;
    Some((beta, resid))
}

/// Restricted least squares through the bordered normal equations.
pub fn restricted_ols(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    r: &DMatrix<f64>,
    target: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let k = x.ncols();
    let q = r.nrows();
    let mut kkt = DMatrix::zeros(k + q, k + q);
    kkt.view_mut((0, 0), (k, k)).copy_from(&(x.transpose() * x));
    kkt.view_mut((k, 0), (q, k)).copy_from(r);
    kkt.view_mut((0, k), (k, q)).copy_from(&r.transpose());
    let mut rhs = DVector::zeros(k + q);
    rhs.rows_mut(0, k).copy_from(&(x.transpose() * y));
    rhs.rows_mut(k, q).copy_from(target);
    let sol = kkt.lu().solve(&rhs)?;
    let beta = sol.rows(0, k).into_owned();
    let resid = y - x * &beta;
    Some((beta, resid))
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    x.select_rows(idx)
}

fn subvec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn sandwich_of(a: &DMatrix<f64>, scores: &[DVector<f64>]) -> DMatrix<f64> {
    let k = a.nrows();
    let mut meat = DMatrix::zeros(k, k);
    for s in scores {
        meat += s * s.transpose();
    }
    a * meat * a
}

pub fn cluster_scores(x: &DMatrix<f64>, u: &DVector<f64>, groups: &[Vec<usize>]) -> Vec<DVector<f64>> {
    groups.iter().map(|m| rows(x, m).transpose() * subvec(u, m)).collect()
}

/// CV1 with `kdof` parameters in the small-sample factor.
pub fn cv1(y: &DVector<f64>, x: &DMatrix<f64>, assign: &[usize], kdof: usize) -> DMatrix<f64> {
    let gr = groups(assign);
    let (_, u) = ols(y, x).unwrap();
    let a = (x.transpose() * x).try_inverse().unwrap();
    let (n, g) = (y.len() as f64, gr.len() as f64);
    let c = g * (n - 1.0) / ((g - 1.0) * (n - kdof as f64));
    sandwich_of(&a, &cluster_scores(x, &u, &gr)) * c
}

/// Explicit `M_gg = I - X_g (X'X)^-1 X_g'`.
pub fn m_gg(x: &DMatrix<f64>, a: &DMatrix<f64>, members: &[usize]) -> DMatrix<f64> {
    let xg = rows(x, members);
    DMatrix::identity(members.len(), members.len()) - &xg * a * xg.transpose()
}

pub fn cv2(y: &DVector<f64>, x: &DMatrix<f64>, assign: &[usize]) -> DMatrix<f64> {
    let (_, u) = ols(y, x).unwrap();
    let a = (x.transpose() * x).try_inverse().unwrap();
    let scores: Vec<DVector<f64>> = groups(assign)
        .iter()
        .map(|m| {
            let eig = SymmetricEigen::new(m_gg(x, &a, m));
            let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
            let inv_sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
            rows(x, m).transpose() * inv_sqrt * subvec(&u, m)
        })
        .collect();
    sandwich_of(&a, &scores)
}

pub fn cv3(y: &DVector<f64>, x: &DMatrix<f64>, assign: &[usize]) -> DMatrix<f64> {
    let gr = groups(assign);
    let (_, u) = ols(y, x).unwrap();
    let a = (x.transpose() * x).try_inverse().unwrap();
    let scores: Vec<DVector<f64>> = gr
        .iter()
        .map(|m| rows(x, m).transpose() * m_gg(x, &a, m).try_inverse().unwrap() * subvec(&u, m))
        .collect();
    let g = gr.len() as f64;
    sandwich_of(&a, &scores) * ((g - 1.0) / g)
}

/// Estimates with each cluster deleted, by refitting.
pub fn deleted_estimates(y: &DVector<f64>, x: &DMatrix<f64>, assign: &[usize]) -> Vec<DVector<f64>> {
    groups(assign)
        .iter()
        .map(|m| {
            let keep: Vec<usize> = (0..y.len()).filter(|i| !m.contains(i)).collect();
            ols(&subvec(y, &keep), &rows(x, &keep)).unwrap().0
        })
        .collect()
}

/// `((G-1)/G) Σ (β̂^(g) - β̂)(β̂^(g) - β̂)'` by refitting.
pub fn jackknife(y: &DVector<f64>, x: &DMatrix<f64>, assign: &[usize]) -> DMatrix<f64> {
    let (beta, _) = ols(y, x).unwrap();
    let del = deleted_estimates(y, x, assign);
    let g = del.len() as f64;
    let k = x.ncols();
    let mut m = DMatrix::zeros(k, k);
    for d in &del {
        let e = d - &beta;
        m += &e * e.transpose();
    }
    m * ((g - 1.0) / g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hc {
    Hc1,
    Hc2,
    Hc3,
}

/// Heteroskedasticity-robust covariance from the hat-matrix diagonal.
pub fn hc(y: &DVector<f64>, x: &DMatrix<f64>, kind: Hc) -> DMatrix<f64> {
    let (n, k) = (x.nrows(), x.ncols());
    let (_, u) = ols(y, x).unwrap();
    let a = (x.transpose() * x).try_inverse().unwrap();
    let hat = x * &a * x.transpose();
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let xi = x.row(i).transpose();
        let h = hat[(i, i)];
        let w = match kind {
            Hc::Hc1 => u[i] * u[i],
            Hc::Hc2 => u[i] * u[i] / (1.0 - h),
            Hc::Hc3 => u[i] * u[i] / (1.0 - h).powi(2),
        };
        meat += &xi * xi.transpose() * w;
    }
    let scale = match kind {
        Hc::Hc1 => n as f64 / (n - k) as f64,
        _ => 1.0,
    };
    &a * meat * &a * scale
}

/// Hat-matrix diagonal `h_i`.
pub fn hat_diagonal(x: &DMatrix<f64>) -> Vec<f64> {
    let a = (x.transpose() * x).try_inverse().unwrap();
    let h = x * a * x.transpose();
    (0..x.nrows()).map(|i| h[(i, i)]).collect()
}

/// `Tr(X_g (X'X)^-1 X_g')` from the explicit N×N hat matrix.
pub fn leverages(x: &DMatrix<f64>, assign: &[usize]) -> Vec<f64> {
    let h = hat_diagonal(x);
    groups(assign).iter().map(|m| m.iter().map(|&i| h[i]).sum()).collect()
}

/// Partial leverages from the explicit auxiliary regression of column `j`
/// on the remaining columns.
pub fn partial_leverages(x: &DMatrix<f64>, assign: &[usize], j: usize) -> Vec<f64> {
    let xj = x.column(j).into_owned();
    let resid = if x.ncols() == 1 {
        xj
    } else {
        ols(&xj, &x.clone().remove_column(j)).unwrap().1
    };
    let total = resid.norm_squared();
    groups(assign)
        .iter()
        .map(|m| m.iter().map(|&i| resid[i] * resid[i]).sum::<f64>() / total)
        .collect()
}

/// Residuals from regressing `col` on an explicit dummy matrix for `fe`.
pub fn dummy_residuals(col: &DVector<f64>, fe: &[usize]) -> DVector<f64> {
    let gr = groups(fe);
    let mut d = DMatrix::zeros(col.len(), gr.len());
    for (g, m) in gr.iter().enumerate() {
        for &i in m {
            d[(i, g)] = 1.0;
        }
    }
    ols(col, &d).unwrap().1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Student {
    Cv1,
    Cv3,
}

/// One wild bootstrap replicate by brute force: build `y*`, refit, form the
/// cluster-robust variance from the bootstrap residuals and return the t
/// statistic (one restriction) or Wald statistic.
///
/// `v` holds one weight per observation; cluster-level schemes repeat the
/// cluster weight across its members. `kdof` enters the CV1 factor.
#[allow(clippy::too_many_arguments)]
pub fn wild_replicate(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    assign: &[usize],
    r: &DMatrix<f64>,
    target: &DVector<f64>,
    restricted: bool,
    v: &[f64],
    student: Student,
    kdof: usize,
) -> f64 {
    let (bhat, uhat) = ols(y, x).unwrap();
    let (base, resid) = if restricted {
        restricted_ols(y, x, r, target).unwrap()
    } else {
        (bhat.clone(), uhat)
    };
    let ystar = x * &base + DVector::from_fn(y.len(), |i, _| v[i] * resid[i]);
    let (bstar, _) = ols(&ystar, x).unwrap();
    let num = if restricted { r * &bstar - target } else { r * (&bstar - &bhat) };
    let vstar = match student {
        Student::Cv1 => cv1(&ystar, x, assign, kdof),
        Student::Cv3 => jackknife(&ystar, x, assign),
    };
    let mid = r * vstar * r.transpose();
    if num.len() == 1 {
        num[0] / mid[(0, 0)].sqrt()
    } else {
        (num.transpose() * mid.try_inverse().unwrap() * &num)[(0, 0)]
    }
}

/// Exact distribution of coefficient `j` over all equally likely ordered
/// pairs-bootstrap draws, grouped by multiset: `(β̂*_j, probability)`.
pub fn pairs_distribution(y: &DVector<f64>, x: &DMatrix<f64>, assign: &[usize], j: usize) -> Vec<(f64, f64)> {
    let gr = groups(assign);
    let g = gr.len();
    let mut out = Vec::new();
    let mut counts = vec![0usize; g];
    fn fact(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        pos: usize,
        left: usize,
        counts: &mut Vec<usize>,
        gr: &[Vec<usize>],
        y: &DVector<f64>,
        x: &DMatrix<f64>,
        j: usize,
        out: &mut Vec<(f64, f64)>,
    ) {
        let g = gr.len();
        if pos == g - 1 {
            counts[pos] = left;
            let mut idx = Vec::new();
            for (c, m) in gr.iter().enumerate() {
                for _ in 0..counts[c] {
                    idx.extend_from_slice(m);
                }
            }
            let ways = fact(g) / counts.iter().map(|&c| fact(c)).product::<f64>();
            let prob = ways / (g as f64).powi(g as i32);
            if let Some((b, _)) = ols(&subvec(y, &idx), &rows(x, &idx)) {
                out.push((b[j], prob));
            }
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, counts, gr, y, x, j, out);
        }
    }
    rec(0, g, &mut counts, &gr, y, x, j, &mut out);
    out
}

/// `Σ_g Σ_{h1<h2 in g} 2 z_{h1} z_{h2}` by explicit pair enumeration.
pub fn cross_product_sum(z: &[f64], coarse_of_fine: &[usize]) -> f64 {
    let mut total = 0.0;
    for h1 in 0..z.len() {
        for h2 in (h1 + 1)..z.len() {
            if coarse_of_fine[h1] == coarse_of_fine[h2] {
                total += 2.0 * z[h1] * z[h2];
            }
        }
    }
    total
}

/// Two-way meat as a double sum over observation pairs sharing either
/// dimension, with no small-sample factors.
pub fn twoway_meat(x: &DMatrix<f64>, u: &DVector<f64>, a: &[usize], b: &[usize]) -> DMatrix<f64> {
    let (n, k) = (x.nrows(), x.ncols());
    let mut m = DMatrix::zeros(k, k);
    for i in 0..n {
        for j in 0..n {
            let w = (a[i] == a[j]) as i32 + (b[i] == b[j]) as i32 - (a[i] == a[j] && b[i] == b[j]) as i32;
            if w != 0 {
                let xi = x.row(i).transpose();
                let xj = x.row(j).transpose();
                m += xi * xj.transpose() * (u[i] * u[j] * w as f64);
            }
        }
    }
    m
}

/// All `C(g, g1)` subsets in lexicographic order.
pub fn combinations(g: usize, g1: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, g: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=(g - left) {
            cur.push(i);
            rec(i + 1, g, left - 1, cur, out);
            cur.pop();
        }
    }
    rec(0, g, g1, &mut cur, &mut out);
    out
}

/// Exact binomial coefficient in 128 bits.
pub fn binomial_u128(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Relative Frobenius distance `|a - b| / max(|b|, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
