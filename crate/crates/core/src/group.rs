//! Carnot groups in exponential coordinates.
//!
//! A [`StratifiedAlgebra`] is given by its strata dimensions and the
//! nonzero structure constants `[e_i, e_j] = sum_m c_ij^m e_m`, with global
//! 0-based basis indices running through the strata in order. The group
//! law is the Baker-Campbell-Hausdorff series, which terminates at the
//! step for nilpotent algebras. It is expanded symbolically once per
//! algebra via Dynkin's formula and cached as polynomials.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::poly::Poly;

/// Tolerance used when checking the Jacobi identity and bracket conflicts.
const STRUCT_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct StratifiedAlgebra {
    name: String,
    strata_dims: Vec<usize>,
    layer: Vec<usize>,
    /// Dense antisymmetric table `c[i][j][m]`.
    consts: Vec<Vec<Vec<f64>>>,
    /// `law[m]` is coordinate `m` of `x * y`, a polynomial in `(x, y)`.
    law: Vec<Poly>,
    /// `fields[k][j]` is the coefficient of `d/dx_j` in the left-invariant
    /// field extending `e_k`.
    fields: Vec<Vec<Poly>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupPoint {
    pub coords: Vec<f64>,
}

impl GroupPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn origin(n: usize) -> Self {
        Self {
            coords: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl From<Vec<f64>> for GroupPoint {
    fn from(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdParams {
    pub rho2: f64,
    pub kappa: f64,
    pub d: usize,
    pub big_d: f64,
}

/// One entry `[e_i, e_j] = value * e_m` of an algebra definition file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BracketEntry {
    pub i: usize,
    pub j: usize,
    pub m: usize,
    pub value: f64,
}

/// Algebra section of a configuration file: either a preset name or an
/// explicit definition.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraConfig {
    pub preset: Option<String>,
    pub step: Option<usize>,
    pub strata_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub bracket: Vec<BracketEntry>,
}

impl AlgebraConfig {
    pub fn build(&self) -> Result<StratifiedAlgebra> {
        if let Some(name) = &self.preset {
            if self.strata_dims.is_some() || !self.bracket.is_empty() {
                return Err(Error::Config(
                    "give either a preset or an explicit algebra, not both".into(),
                ));
            }
            return StratifiedAlgebra::preset(name);
        }
        let dims = self
            .strata_dims
            .clone()
            .ok_or_else(|| Error::Config("algebra needs `preset` or `strata_dims`".into()))?;
        if let Some(step) = self.step {
            if step != dims.len() {
                return Err(Error::Config(format!(
                    "step = {step} but {} strata given",
                    dims.len()
                )));
            }
        }
        let entries: Vec<(usize, usize, usize, f64)> =
            self.bracket.iter().map(|b| (b.i, b.j, b.m, b.value)).collect();
        StratifiedAlgebra::new(&dims, &entries)
    }
}

fn factorial(k: usize) -> u64 {
    (1..=k as u64).product()
}

impl StratifiedAlgebra {
    /// Build an algebra from strata dimensions and bracket entries
    /// `(i, j, m, value)` meaning `[e_i, e_j]` has `value` on `e_m`.
    ///
    /// Entries for `(j, i)` are implied by antisymmetry; giving both is
    /// allowed only when they agree.
    pub fn new(strata_dims: &[usize], brackets: &[(usize, usize, usize, f64)]) -> Result<Self> {
        if strata_dims.is_empty() || strata_dims.contains(&0) {
            return Err(Error::InvalidAlgebra(
                "strata dimensions must be a nonempty list of positive integers".into(),
            ));
        }
        let n: usize = strata_dims.iter().sum();
        let layer: Vec<usize> = strata_dims
            .iter()
            .enumerate()
            .flat_map(|(a, &k)| std::iter::repeat_n(a + 1, k))
            .collect();

        let mut given: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for &(i, j, m, v) in brackets {
            if i >= n || j >= n || m >= n {
                return Err(Error::InvalidAlgebra(format!(
                    "bracket index ({i}, {j}, {m}) out of range for dimension {n}"
                )));
            }
            if v == 0.0 {
                continue;
            }
            if i == j {
                return Err(Error::InvalidAlgebra(format!(
                    "[e_{i}, e_{i}] must vanish by antisymmetry"
                )));
            }
            if layer[m] != layer[i] + layer[j] {
                return Err(Error::InvalidAlgebra(format!(
                    "[e_{i}, e_{j}] lies in layers {} and {} but has a component on e_{m} in layer {}",
                    layer[i], layer[j], layer[m]
                )));
            }
            let (a, b, s) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
            match given.get(&(a, b, m)) {
                Some(&prev) if (prev - s * v).abs() > STRUCT_TOL * prev.abs().max(1.0) => {
                    return Err(Error::InvalidAlgebra(format!(
                        "conflicting entries for [e_{a}, e_{b}] on e_{m}"
                    )));
                }
                _ => {
                    given.insert((a, b, m), s * v);
                }
            }
        }

        let mut consts = vec![vec![vec![0.0; n]; n]; n];
        for (&(a, b, m), &v) in &given {
            consts[a][b][m] = v;
            consts[b][a][m] = -v;
        }

        let alg_tmp = Self {
            name: String::new(),
            strata_dims: strata_dims.to_vec(),
            layer,
            consts,
            law: Vec::new(),
            fields: Vec::new(),
        };
        alg_tmp.check_jacobi()?;

        let law = alg_tmp.dynkin_law();
        let fields = (0..n)
            .map(|k| {
                law.iter()
                    .map(|lj| {
                        let zero_y: Vec<(usize, f64)> = (n..2 * n).map(|v| (v, 0.0)).collect();
                        lj.deriv(n + k).substitute(&zero_y).truncate_vars(n)
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            name: "custom".into(),
            law,
            fields,
            ..alg_tmp
        })
    }

    /// Heisenberg algebra `H^n`: basis `X_1..X_n, Y_1..Y_n, Z` with
    /// `[X_i, Y_i] = Z`.
    pub fn heisenberg(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "Heisenberg dimension must be at least 1"));
        }
        let brackets: Vec<_> = (0..n).map(|i| (i, n + i, 2 * n, 1.0)).collect();
        let mut alg = Self::new(&[2 * n, 1], &brackets)?;
        alg.name = format!("heisenberg-{n}");
        Ok(alg)
    }

    /// The abelian group `R^n` as a step-1 Carnot group.
    pub fn abelian(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "dimension must be at least 1"));
        }
        let mut alg = Self::new(&[n], &[])?;
        alg.name = format!("abelian-{n}");
        Ok(alg)
    }

    /// The step-3 Engel algebra: `[e_0, e_1] = e_2`, `[e_0, e_2] = e_3`.
    pub fn engel() -> Result<Self> {
        let mut alg = Self::new(&[2, 1, 1], &[(0, 1, 2, 1.0), (0, 2, 3, 1.0)])?;
        alg.name = "engel".into();
        Ok(alg)
    }

    /// A step-2 algebra with `d` horizontal and `m` vertical directions and
    /// structure constants drawn uniformly from `[-1, 1]`.
    ///
    /// Any such choice satisfies the Jacobi identity; draws whose brackets
    /// fail to span the second layer are rejected and redrawn.
    pub fn random_step2(d: usize, m: usize, seed: u64) -> Result<Self> {
        if d < 2 || m == 0 || m > d * (d - 1) / 2 {
            return Err(invalid("d/m", "need d >= 2 and 1 <= m <= d(d-1)/2"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let mut br = Vec::new();
            for i in 0..d {
                for j in i + 1..d {
                    for k in 0..m {
                        br.push((i, j, d + k, 2.0 * rng.random::<f64>() - 1.0));
                    }
                }
            }
            let mut alg = Self::new(&[d, m], &br)?;
            if alg.is_generated_by_first_layer() {
                alg.name = format!("random-{d}-{m}-{seed}");
                return Ok(alg);
            }
        }
        Err(Error::InvalidAlgebra("could not draw a generating bracket".into()))
    }

    /// Resolve `heisenberg-N`, `abelian-N` or `engel`.
    pub fn preset(name: &str) -> Result<Self> {
        let parse_n = |rest: &str| {
            rest.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad preset `{name}`")))
        };
        if let Some(rest) = name.strip_prefix("heisenberg-") {
            Self::heisenberg(parse_n(rest)?)
        } else if let Some(rest) = name.strip_prefix("abelian-") {
            Self::abelian(parse_n(rest)?)
        } else if name == "engel" {
            Self::engel()
        } else {
            Err(Error::Config(format!(
                "unknown preset `{name}` (expected heisenberg-N, abelian-N or engel)"
            )))
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn step(&self) -> usize {
        self.strata_dims.len()
    }

    pub fn strata_dims(&self) -> &[usize] {
        &self.strata_dims
    }

    pub fn total_dim(&self) -> usize {
        self.layer.len()
    }

    /// Horizontal dimension `d = n_1`.
    pub fn horizontal_dim(&self) -> usize {
        self.strata_dims[0]
    }

    /// Homogeneous dimension `Q = sum_i i * n_i`.
    pub fn hom_dim(&self) -> usize {
        self.strata_dims
            .iter()
            .enumerate()
            .map(|(a, &k)| (a + 1) * k)
            .sum()
    }

    /// Layer (1-based) of every coordinate.
    pub fn layers(&self) -> &[usize] {
        &self.layer
    }

    /// Index range of layer `a` (1-based).
    pub fn layer_range(&self, a: usize) -> std::ops::Range<usize> {
        let start: usize = self.strata_dims[..a - 1].iter().sum();
        start..start + self.strata_dims[a - 1]
    }

    /// The structure constant `c_ij^m`.
    pub fn structure_constant(&self, i: usize, j: usize, m: usize) -> f64 {
        self.consts[i][j][m]
    }

    /// All nonzero structure constants `(i, j, m, value)`, both orders.
    pub fn structure_constants(&self) -> Vec<(usize, usize, usize, f64)> {
        let n = self.total_dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for m in 0..n {
                    let v = self.consts[i][j][m];
                    if v != 0.0 {
                        out.push((i, j, m, v));
                    }
                }
            }
        }
        out
    }

    /// The group law polynomials in `(x, y)`.
    pub fn law(&self) -> &[Poly] {
        &self.law
    }

    /// Coefficients of the left-invariant field extending basis vector `k`.
    pub fn field_coeffs(&self, k: usize) -> &[Poly] {
        &self.fields[k]
    }

    /// Whether the first stratum generates every layer under brackets.
    pub fn is_generated_by_first_layer(&self) -> bool {
        for a in 2..=self.step() {
            let range = self.layer_range(a);
            let prev = self.layer_range(a - 1);
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for i in self.layer_range(1) {
                for j in prev.clone() {
                    rows.push(range.clone().map(|m| self.consts[i][j][m]).collect());
                }
            }
            let mat = DMatrix::from_fn(rows.len(), range.len(), |r, c| rows[r][c]);
            if mat.rank(1e-10) < range.len() {
                return false;
            }
        }
        true
    }

    fn bracket_vec(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.total_dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if b[j] == 0.0 {
                    continue;
                }
                for m in 0..n {
                    out[m] += a[i] * b[j] * self.consts[i][j][m];
                }
            }
        }
        out
    }

    fn check_jacobi(&self) -> Result<()> {
        let n = self.total_dim();
        let e = |k: usize| {
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            v
        };
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (a, b, c) = (e(i), e(j), e(k));
                    let t1 = self.bracket_vec(&a, &self.bracket_vec(&b, &c));
                    let t2 = self.bracket_vec(&b, &self.bracket_vec(&c, &a));
                    let t3 = self.bracket_vec(&c, &self.bracket_vec(&a, &b));
                    if (0..n).any(|m| (t1[m] + t2[m] + t3[m]).abs() > STRUCT_TOL) {
                        return Err(Error::InvalidAlgebra(format!(
                            "Jacobi identity fails for e_{i}, e_{j}, e_{k}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn bracket_poly(&self, a: &[Poly], b: &[Poly]) -> Vec<Poly> {
        let n = self.total_dim();
        let nv = a[0].nvars();
        let mut out = vec![Poly::zero(nv); n];
        for i in 0..n {
            if a[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if b[j].is_zero() {
                    continue;
                }
                let prod = &a[i] * &b[j];
                for m in 0..n {
                    let c = self.consts[i][j][m];
                    if c != 0.0 {
                        out[m] = &out[m] + &prod.scale(c);
                    }
                }
            }
        }
        out
    }

    /// Dynkin's form of the BCH series, truncated at word length `step`.
    fn dynkin_law(&self) -> Vec<Poly> {
        let n = self.total_dim();
        let r = self.step();
        let nv = 2 * n;
        let x: Vec<Poly> = (0..n).map(|i| Poly::var(nv, i)).collect();
        let y: Vec<Poly> = (0..n).map(|i| Poly::var(nv, n + i)).collect();
        let mut total: Vec<Poly> = vec![Poly::zero(nv); n];

        // Each block is a pair (r_i, s_i) with r_i + s_i >= 1.
        let mut blocks: Vec<(usize, usize)> = Vec::new();
        for len in 1..=r {
            for ri in 0..=len {
                blocks.push((ri, len - ri));
            }
        }

        fn recurse(
            alg: &StratifiedAlgebra,
            blocks: &[(usize, usize)],
            chosen: &mut Vec<(usize, usize)>,
            remaining: usize,
            x: &[Poly],
            y: &[Poly],
            total: &mut Vec<Poly>,
        ) {
            if !chosen.is_empty() {
                let k = chosen.len();
                let word_len: usize = chosen.iter().map(|&(a, b)| a + b).sum();
                let denom: f64 = word_len as f64
                    * chosen
                        .iter()
                        .map(|&(a, b)| (factorial(a) * factorial(b)) as f64)
                        .product::<f64>();
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                let coeff = sign / (k as f64 * denom);
                let mut word: Vec<bool> = Vec::with_capacity(word_len);
                for &(a, b) in chosen.iter() {
                    word.extend(std::iter::repeat_n(true, a));
                    word.extend(std::iter::repeat_n(false, b));
                }
                let letter = |is_x: bool| if is_x { x.to_vec() } else { y.to_vec() };
                let mut acc = letter(*word.last().unwrap());
                for &l in word[..word_len - 1].iter().rev() {
                    acc = alg.bracket_poly(&letter(l), &acc);
                    if acc.iter().all(Poly::is_zero) {
                        break;
                    }
                }
                for (t, a) in total.iter_mut().zip(&acc) {
                    if !a.is_zero() {
                        *t = &*t + &a.scale(coeff);
                    }
                }
            }
            for &(a, b) in blocks {
                if a + b <= remaining {
                    chosen.push((a, b));
                    recurse(alg, blocks, chosen, remaining - a - b, x, y, total);
                    chosen.pop();
                }
            }
        }

        recurse(self, &blocks, &mut Vec::new(), r, &x, &y, &mut total);
        total
    }

    fn check_point(&self, x: &GroupPoint) -> Result<()> {
        if x.dim() != self.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }

    pub fn origin(&self) -> GroupPoint {
        GroupPoint::origin(self.total_dim())
    }

    /// Group product `x * y` in exponential coordinates.
    pub fn multiply(&self, x: &GroupPoint, y: &GroupPoint) -> Result<GroupPoint> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(GroupPoint::new(self.multiply_slices(&x.coords, &y.coords)))
    }

    pub fn multiply_slices(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut xy = Vec::with_capacity(2 * x.len());
        xy.extend_from_slice(x);
        xy.extend_from_slice(y);
        self.law.iter().map(|p| p.eval(&xy)).collect()
    }

    /// Inverse element: coordinate negation in exponential coordinates.
    pub fn inverse(&self, x: &GroupPoint) -> GroupPoint {
        GroupPoint::new(x.coords.iter().map(|v| -v).collect())
    }

    /// Anisotropic dilation `x^(i) -> lambda^i x^(i)`.
    pub fn dilate(&self, lambda: f64, x: &GroupPoint) -> Result<GroupPoint> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        self.check_point(x)?;
        Ok(GroupPoint::new(
            x.coords
                .iter()
                .zip(&self.layer)
                .map(|(v, &a)| v * lambda.powi(a as i32))
                .collect(),
        ))
    }

    /// The exponent `2 r!` of the homogeneous norm.
    pub fn norm_power(&self) -> u32 {
        2 * factorial(self.step()) as u32
    }

    /// Homogeneous norm `(sum_i |x^(i)|^(2r!/i))^(1/(2r!))`.
    pub fn hom_norm(&self, x: &GroupPoint) -> f64 {
        self.hom_norm_slice(&x.coords)
    }

    pub fn hom_norm_slice(&self, x: &[f64]) -> f64 {
        // Work with the degree-1 quantities |x^(i)|^(1/i) scaled by their
        // maximum so the large power cannot overflow.
        let mut a = Vec::with_capacity(self.step());
        let mut start = 0;
        for (idx, &k) in self.strata_dims.iter().enumerate() {
            let sq: f64 = x[start..start + k].iter().map(|v| v * v).sum();
            a.push(sq.sqrt().powf(1.0 / (idx + 1) as f64));
            start += k;
        }
        let max = a.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return 0.0;
        }
        let p = self.norm_power() as i32;
        let s: f64 = a.iter().map(|v| (v / max).powi(p)).sum();
        max * s.powf(1.0 / p as f64)
    }

    /// The polynomial `|x|^(2r!)` in the coordinates.
    pub fn gauge_poly(&self) -> Poly {
        let n = self.total_dim();
        let p = self.norm_power() as usize;
        let mut out = Poly::zero(n);
        for a in 1..=self.step() {
            let mut sq = Poly::zero(n);
            for i in self.layer_range(a) {
                let v = Poly::var(n, i);
                sq = &sq + &(&v * &v);
            }
            out = &out + &sq.powi((p / (2 * a)) as u32);
        }
        out
    }

    /// Homogeneous distance `|y^{-1} x|`.
    pub fn distance(&self, x: &GroupPoint, y: &GroupPoint) -> Result<f64> {
        let yinv = self.inverse(y);
        Ok(self.hom_norm(&self.multiply(&yinv, x)?))
    }

    /// Monte Carlo estimate of the Haar volume of the norm ball of radius
    /// `r`, with its standard error.
    ///
    /// Samples are drawn from the box `|x^(i)|_inf <= r^i` in blocks, each
    /// with its own ChaCha stream, and reduced in block order, so the
    /// result depends only on `(samples, seed)`.
    pub fn ball_volume_mc(&self, r: f64, samples: u64, seed: u64) -> Result<(f64, f64)> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid("R", format!("must be positive, got {r}")));
        }
        if samples < 10_000 {
            return Err(invalid("samples", format!("need at least 10^4, got {samples}")));
        }
        const BLOCK: u64 = 1 << 16;
        let n = self.total_dim();
        let half_widths: Vec<f64> = self.layer.iter().map(|&a| r.powi(a as i32)).collect();
        let nblocks = samples.div_ceil(BLOCK);
        let hits: Vec<u64> = (0..nblocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b);
                let count = BLOCK.min(samples - b * BLOCK);
                let mut x = vec![0.0; n];
                let mut h = 0u64;
                for _ in 0..count {
                    for (xi, w) in x.iter_mut().zip(&half_widths) {
                        *xi = w * (2.0 * rng.random::<f64>() - 1.0);
                    }
                    if self.hom_norm_slice(&x) < r {
                        h += 1;
                    }
                }
                h
            })
            .collect();
        let hit: u64 = hits.iter().sum();
        let box_vol: f64 = half_widths.iter().map(|w| 2.0 * w).product();
        let frac = hit as f64 / samples as f64;
        let est = box_vol * frac;
        let stderr = box_vol * (frac * (1.0 - frac) / samples as f64).sqrt();
        Ok((est, stderr))
    }

    fn require_step2(&self) -> Result<()> {
        if self.step() != 2 {
            return Err(Error::WrongStep {
                required: 2,
                got: self.step(),
            });
        }
        Ok(())
    }

    /// Gram matrices of the two quadratic forms behind `rho_2` and `kappa`.
    ///
    /// `G[m][m'] = 1/4 sum_ij c_ij^m c_ij^m'` over horizontal `i, j` and
    /// `K[i][i'] = sum_jm c_ij^m c_i'j^m`.
    pub fn cd_gram_matrices(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.require_step2()?;
        let h = self.layer_range(1);
        let v = self.layer_range(2);
        let d = h.len();
        let nv = v.len();
        let g = DMatrix::from_fn(nv, nv, |a, b| {
            let (m, mp) = (v.start + a, v.start + b);
            let mut s = 0.0;
            for i in h.clone() {
                for j in h.clone() {
                    s += self.consts[i][j][m] * self.consts[i][j][mp];
                }
            }
            0.25 * s
        });
        let k = DMatrix::from_fn(d, d, |a, b| {
            let (i, ip) = (h.start + a, h.start + b);
            let mut s = 0.0;
            for j in h.clone() {
                for m in v.clone() {
                    s += self.consts[i][j][m] * self.consts[ip][j][m];
                }
            }
            s
        });
        Ok((g, k))
    }

    /// Curvature-dimension parameters of a step-2 group, as extreme
    /// eigenvalues of the Gram matrices from [`Self::cd_gram_matrices`].
    pub fn cd_parameters(&self) -> Result<CdParams> {
        let (g, k) = self.cd_gram_matrices()?;
        let rho2 = SymmetricEigen::new(g).eigenvalues.min();
        let kappa = SymmetricEigen::new(k).eigenvalues.max().max(0.0);
        if rho2 <= 1e-12 {
            return Err(Error::InvalidAlgebra(format!(
                "rho_2 = {rho2} is not positive; the vertical form is degenerate"
            )));
        }
        let d = self.horizontal_dim();
        Ok(CdParams {
            rho2,
            kappa,
            d,
            big_d: (1.0 + 3.0 * kappa / (2.0 * rho2)) * d as f64,
        })
    }

    /// Independent estimate of `(rho_2, kappa)` as the inf and sup of the
    /// defining Rayleigh quotients over random unit vectors.
    pub fn cd_parameters_sweep(&self, samples: usize, seed: u64) -> Result<(f64, f64)> {
        self.require_step2()?;
        let h = self.layer_range(1);
        let v = self.layer_range(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
            loop {
                let u: Vec<f64> = (0..k).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
                let nrm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
                if nrm > 1e-3 && nrm <= 1.0 {
                    return u.into_iter().map(|a| a / nrm).collect();
                }
            }
        };
        let mut rho2 = f64::INFINITY;
        let mut kappa: f64 = 0.0;
        for _ in 0..samples {
            let z = unit(&mut rng, v.len());
            let mut s = 0.0;
            for i in h.clone() {
                for j in h.clone() {
                    let w: f64 = v.clone().map(|m| self.consts[i][j][m] * z[m - v.start]).sum();
                    s += w * w;
                }
            }
            rho2 = rho2.min(0.25 * s);

            let x = unit(&mut rng, h.len());
            let mut s = 0.0;
            for j in h.clone() {
                for m in v.clone() {
                    let w: f64 = h.clone().map(|i| self.consts[i][j][m] * x[i - h.start]).sum();
                    s += w * w;
                }
            }
            kappa = kappa.max(s);
        }
        Ok((rho2, kappa))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn heisenberg_dimensions() {
        let h1 = StratifiedAlgebra::heisenberg(1).unwrap();
        assert_eq!(h1.hom_dim(), 4);
        assert_eq!(StratifiedAlgebra::heisenberg(2).unwrap().hom_dim(), 6);
        let sc = h1.structure_constants();
        assert_eq!(sc, vec![(0, 1, 2, 1.0), (1, 0, 2, -1.0)]);
    }

    #[test]
    fn heisenberg_product_matches_bch_by_hand() {
        let h1 = StratifiedAlgebra::heisenberg(1).unwrap();
        let p = h1
            .multiply(&vec![1.0, 0.0, 0.0].into(), &vec![0.0, 1.0, 0.0].into())
            .unwrap();
        assert!(close(&p.coords, &[1.0, 1.0, 0.5], 1e-15));
    }

    #[test]
    fn engel_law_matches_third_order_bch() {
        // x + y + 1/2 [x,y] + 1/12 ([x,[x,y]] + [y,[y,x]])
        let g = StratifiedAlgebra::engel().unwrap();
        let x = [0.3, -1.2, 0.7, 2.0];
        let y = [-0.8, 0.5, 1.1, -0.4];
        let got = g.multiply_slices(&x, &y);
        let xy = g.bracket_vec(&x, &y);
        let xxy = g.bracket_vec(&x, &xy);
        let yyx = g.bracket_vec(&y, &g.bracket_vec(&y, &x));
        let want: Vec<f64> = (0..4)
            .map(|m| x[m] + y[m] + 0.5 * xy[m] + (xxy[m] + yyx[m]) / 12.0)
            .collect();
        assert!(close(&got, &want, 1e-13), "{got:?} vs {want:?}");
    }

    #[test]
    fn norm_examples() {
        let h1 = StratifiedAlgebra::heisenberg(1).unwrap();
        assert_eq!(h1.hom_norm(&h1.origin()), 0.0);
        assert!((h1.hom_norm(&vec![1.0, 0.0, 0.0].into()) - 1.0).abs() < 1e-15);
        let v = h1.hom_norm(&vec![1.0, 0.0, 1.0].into());
        assert!((v - 2f64.powf(0.25)).abs() < 1e-12);
        let x: GroupPoint = vec![0.4, -0.9, 1.3].into();
        let via_poly = h1.gauge_poly().eval(&x.coords).powf(0.25);
        assert!((via_poly - h1.hom_norm(&x)).abs() < 1e-14);
    }

    #[test]
    fn dilation_example() {
        let h1 = StratifiedAlgebra::heisenberg(1).unwrap();
        let d = h1.dilate(2.0, &vec![1.0, 1.0, 1.0].into()).unwrap();
        assert_eq!(d.coords, vec![2.0, 2.0, 4.0]);
        assert!(h1.dilate(0.0, &d).is_err());
    }

    #[test]
    fn rejects_bad_algebras() {
        assert!(StratifiedAlgebra::new(&[2, 1], &[(0, 1, 1, 1.0)]).is_err());
        assert!(StratifiedAlgebra::new(&[2, 1], &[(0, 1, 2, 1.0), (1, 0, 2, 1.0)]).is_err());
        assert!(StratifiedAlgebra::new(&[2, 1], &[(0, 1, 2, 1.0), (1, 0, 2, -1.0)]).is_ok());
        assert!(StratifiedAlgebra::new(&[2, 0], &[]).is_err());
        let h1 = StratifiedAlgebra::heisenberg(1).unwrap();
        assert!(matches!(
            h1.multiply(&vec![1.0].into(), &h1.origin()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cd_parameters_heisenberg() {
        let h1 = StratifiedAlgebra::heisenberg(1).unwrap();
        let cd = h1.cd_parameters().unwrap();
        assert_eq!((cd.rho2, cd.kappa, cd.d, cd.big_d), (0.5, 1.0, 2, 8.0));
        let (r, k) = h1.cd_parameters_sweep(200, 1).unwrap();
        assert!((r - 0.5).abs() < 1e-12 && (k - 1.0).abs() < 1e-12);
        let h2 = StratifiedAlgebra::heisenberg(2).unwrap().cd_parameters().unwrap();
        assert!((h2.rho2 - 1.0).abs() < 1e-12 && (h2.kappa - 1.0).abs() < 1e-12);
        assert!((h2.big_d - 10.0).abs() < 1e-12);
    }

    #[test]
    fn cd_parameters_rejects_degenerate_and_wrong_step() {
        let flat = StratifiedAlgebra::new(&[2, 1], &[]).unwrap();
        assert!(matches!(flat.cd_parameters(), Err(Error::InvalidAlgebra(_))));
        let ab = StratifiedAlgebra::abelian(3).unwrap();
        assert!(matches!(ab.cd_parameters(), Err(Error::WrongStep { .. })));
    }

    #[test]
    fn field_coefficients_heisenberg() {
        let h1 = StratifiedAlgebra::heisenberg(1).unwrap();
        let pt = [0.7, -1.1, 0.3];
        let x1: Vec<f64> = h1.field_coeffs(0).iter().map(|c| c.eval(&pt)).collect();
        let x2: Vec<f64> = h1.field_coeffs(1).iter().map(|c| c.eval(&pt)).collect();
        assert!(close(&x1, &[1.0, 0.0, 1.1 / 2.0], 1e-15));
        assert!(close(&x2, &[0.0, 1.0, 0.7 / 2.0], 1e-15));
    }

    #[test]
    fn config_round_trip() {
        let cfg: AlgebraConfig = toml::from_str(
            "strata_dims = [2, 1]\n[[bracket]]\ni = 0\nj = 1\nm = 2\nvalue = 1.0\n",
        )
        .unwrap();
        let alg = cfg.build().unwrap();
        assert_eq!(alg.structure_constants().len(), 2);
        let preset: AlgebraConfig = toml::from_str("preset = \"heisenberg-2\"").unwrap();
        assert_eq!(preset.build().unwrap().hom_dim(), 6);
        assert!(StratifiedAlgebra::preset("nope").is_err());
        assert!(StratifiedAlgebra::engel().unwrap().is_generated_by_first_layer());
        assert!(!StratifiedAlgebra::new(&[2, 1], &[]).unwrap().is_generated_by_first_layer());
    }

    #[test]
    fn haar_volume_quadrature_cross_check() {
        // Midpoint rule on a 200^3 grid over the box containing the unit ball.
        let h1 = StratifiedAlgebra::heisenberg(1).unwrap();
        let m = 200;
        let mut count = 0u64;
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    let p = [
                        -1.0 + (a as f64 + 0.5) * 2.0 / m as f64,
                        -1.0 + (b as f64 + 0.5) * 2.0 / m as f64,
                        -1.0 + (c as f64 + 0.5) * 2.0 / m as f64,
                    ];
                    if h1.hom_norm_slice(&p) < 1.0 {
                        count += 1;
                    }
                }
            }
        }
        let quad = 8.0 * count as f64 / (m * m * m) as f64;
        let (mc, se) = h1.ball_volume_mc(1.0, 400_000, 7).unwrap();
        assert!((mc - quad).abs() < 4.0 * se + 1e-3, "mc {mc} se {se} quad {quad}");
    }
}
