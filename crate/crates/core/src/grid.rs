//! Uniform grids in exponential coordinates and the sub-Laplacian stencil.
//!
//! Axes follow the coordinate order of the algebra, so the vertical axes
//! come last and every horizontal row owns one contiguous block of
//! vertical nodes.
//!
//! The stencil is semi-Lagrangian: along each horizontal field,
//!
//! ```text
//! X_k^2 f(x) ~ [f(x * h e_k) - 2 f(x) + f(x * (-h e_k))] / h^2
//! ```
//!
//! The translated points `x * (+-h e_k)` sit exactly on a neighbouring
//! horizontal row, displaced vertically by an amount that depends only on
//! the row. That vertical displacement is resolved by linear
//! interpolation. All weights are nonnegative, so the scheme is monotone,
//! and it is second order in `h` when the vertical spacing is `O(h^2)`.
//! Only step-2 (and step-1) algebras are supported.
//!
//! Two boundary models exist. `Dirichlet` treats values outside the box as
//! zero and marks an outer sponge layer. `Periodic` is the compact quotient
//! of the group by the lattice generated by `L_k e_k` and `P_m e_m`; it has
//! no boundary at all. Leaving the fundamental domain horizontally applies
//! the lattice element through the group law, which shifts the vertical
//! coordinate.

use std::io::{Read, Write};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffops::{DiffOps, SmoothFn};
use crate::error::{invalid, Error, Result};
use crate::group::StratifiedAlgebra;

/// Chunk length for order-independent parallel sums.
const SUM_CHUNK: usize = 1 << 14;

/// Fraction of nodes per side treated as a sponge on Dirichlet grids.
pub const SPONGE_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    counts: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<usize>,
    boundary: Boundary,
}

impl GridSpec {
    /// Origin-centred box `[-A_j, A_j]` with spacing `h_j`; `A_j` is
    /// rounded to a whole number of cells.
    pub fn dirichlet(half_extents: &[f64], spacing: &[f64]) -> Result<Self> {
        if half_extents.len() != spacing.len() {
            return Err(Error::DimensionMismatch {
                expected: half_extents.len(),
                got: spacing.len(),
            });
        }
        let mut counts = Vec::new();
        let mut origin = Vec::new();
        for (&a, &h) in half_extents.iter().zip(spacing) {
            if !(h > 0.0 && h.is_finite()) || !(a > 0.0 && a.is_finite()) {
                return Err(invalid("grid", "extents and spacings must be positive"));
            }
            let half = (a / h).round() as usize;
            counts.push(2 * half + 1);
            origin.push(half);
        }
        Self::from_parts(counts, spacing.to_vec(), origin, Boundary::Dirichlet)
    }

    /// Fundamental domain `[-P_j/2, P_j/2)` of a periodic grid with
    /// `counts[j]` nodes per period.
    pub fn periodic(periods: &[f64], counts: &[usize]) -> Result<Self> {
        if periods.len() != counts.len() {
            return Err(Error::DimensionMismatch {
                expected: periods.len(),
                got: counts.len(),
            });
        }
        if periods.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(invalid("grid", "periods must be positive"));
        }
        let spacing = periods
            .iter()
            .zip(counts)
            .map(|(p, &c)| p / c as f64)
            .collect();
        let origin = counts.iter().map(|c| c / 2).collect();
        Self::from_parts(counts.to_vec(), spacing, origin, Boundary::Periodic)
    }

    pub fn from_parts(
        counts: Vec<usize>,
        spacing: Vec<f64>,
        origin: Vec<usize>,
        boundary: Boundary,
    ) -> Result<Self> {
        if counts.is_empty() || counts.len() != spacing.len() || counts.len() != origin.len() {
            return Err(Error::Malformed("inconsistent grid description".into()));
        }
        for (j, &c) in counts.iter().enumerate() {
            if c < 5 {
                return Err(Error::GridTooSmall(format!(
                    "axis {j} has {c} nodes; at least 5 are needed"
                )));
            }
            if origin[j] >= c {
                return Err(Error::Malformed(format!("origin outside axis {j}")));
            }
            if !(spacing[j] > 0.0 && spacing[j].is_finite()) {
                return Err(invalid("spacing", "must be positive and finite"));
            }
        }
        Ok(Self {
            counts,
            spacing,
            origin,
            boundary,
        })
    }

    /// Dirichlet grid for a step-2 algebra with horizontal half-width
    /// `horiz`, vertical half-width `vert`, spacing `h` and vertical
    /// spacing `h^2`.
    pub fn graded(alg: &StratifiedAlgebra, horiz: f64, vert: f64, h: f64) -> Result<Self> {
        let mut ext = Vec::new();
        let mut sp = Vec::new();
        for &a in alg.layers() {
            ext.push(if a == 1 { horiz } else { vert });
            sp.push(h.powi(a as i32));
        }
        Self::dirichlet(&ext, &sp)
    }

    /// The image of this grid under the dilation `delta_lambda`.
    pub fn dilated(&self, layers: &[usize], lambda: f64) -> Result<Self> {
        if layers.len() != self.ndim() {
            return Err(Error::DimensionMismatch {
                expected: self.ndim(),
                got: layers.len(),
            });
        }
        if !(lambda > 0.0) {
            return Err(invalid("lambda", "must be positive"));
        }
        let spacing = self
            .spacing
            .iter()
            .zip(layers)
            .map(|(h, &a)| h * lambda.powi(a as i32))
            .collect();
        Self::from_parts(
            self.counts.clone(),
            spacing,
            self.origin.clone(),
            self.boundary,
        )
    }

    pub fn ndim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn coord(&self, axis: usize, idx: usize) -> f64 {
        (idx as f64 - self.origin[axis] as f64) * self.spacing[axis]
    }

    /// Smallest and largest coordinate along an axis.
    pub fn axis_range(&self, axis: usize) -> (f64, f64) {
        (self.coord(axis, 0), self.coord(axis, self.counts[axis] - 1))
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.ndim()];
        for j in (0..self.ndim().saturating_sub(1)).rev() {
            s[j] = s[j + 1] * self.counts[j + 1];
        }
        s
    }

    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for j in (0..self.ndim()).rev() {
            out[j] = flat % self.counts[j];
            flat /= self.counts[j];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn node_coords(&self, flat: usize, out: &mut [f64]) {
        let mut f = flat;
        for j in (0..self.ndim()).rev() {
            let i = f % self.counts[j];
            f /= self.counts[j];
            out[j] = self.coord(j, i);
        }
    }

    /// Index of the origin node.
    pub fn origin_flat(&self) -> usize {
        self.ravel(&self.origin)
    }

    /// Number of sponge nodes on each side of an axis.
    pub fn sponge_width(&self, axis: usize) -> usize {
        match self.boundary {
            Boundary::Periodic => 0,
            Boundary::Dirichlet => {
                ((self.counts[axis] as f64 * SPONGE_FRACTION).ceil() as usize).max(1)
            }
        }
    }

    pub fn in_sponge(&self, flat: usize) -> bool {
        let mut f = flat;
        for j in (0..self.ndim()).rev() {
            let i = f % self.counts[j];
            f /= self.counts[j];
            let w = self.sponge_width(j);
            if i < w || i + w >= self.counts[j] {
                return true;
            }
        }
        false
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"CGF1";

impl GridField {
    pub fn zeros(spec: &GridSpec) -> Self {
        Self {
            spec: spec.clone(),
            values: vec![0.0; spec.len()],
        }
    }

    pub fn from_values(spec: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            spec: spec.clone(),
            values,
        })
    }

    /// Sample `f` at every node.
    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(spec: &GridSpec, f: F) -> Self {
        let n = spec.ndim();
        let values = (0..spec.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, i| {
                    spec.node_coords(i, buf);
                    f(buf)
                },
            )
            .collect();
        Self {
            spec: spec.clone(),
            values,
        }
    }

    pub fn map<F: Fn(f64) -> f64 + Sync + Send>(&self, f: F) -> Self {
        Self {
            spec: self.spec.clone(),
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sum of all values with a reduction order independent of threading.
    pub fn sum(&self) -> f64 {
        det_sum(&self.values)
    }

    /// Riemann sum `sum f * cell volume`.
    pub fn integral(&self) -> f64 {
        self.sum() * self.spec.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.par_iter().fold(|| 0.0f64, |m, v| m.max(v.abs())).reduce(|| 0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.par_iter().cloned().reduce(|| f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.par_iter().cloned().reduce(|| f64::NEG_INFINITY, f64::max)
    }

    pub fn value_at_origin(&self) -> f64 {
        self.values[self.spec.origin_flat()]
    }

    /// Largest absolute value inside the sponge layer.
    pub fn sponge_max_abs(&self) -> f64 {
        (0..self.values.len())
            .into_par_iter()
            .filter(|&i| self.spec.in_sponge(i))
            .map(|i| self.values[i].abs())
            .reduce(|| 0.0, f64::max)
    }

    /// Binary layout: magic `CGF1`, byte-order flag (1 = little endian),
    /// boundary flag, `ndim` as u32, then per axis the count (u64), origin
    /// index (u64) and spacing (f64), then all values as f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[1u8])?;
        w.write_all(&[match self.spec.boundary {
            Boundary::Dirichlet => 0u8,
            Boundary::Periodic => 1u8,
        }])?;
        w.write_all(&(self.spec.ndim() as u32).to_le_bytes())?;
        for j in 0..self.spec.ndim() {
            w.write_all(&(self.spec.counts[j] as u64).to_le_bytes())?;
            w.write_all(&(self.spec.origin[j] as u64).to_le_bytes())?;
            w.write_all(&self.spec.spacing[j].to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 10];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(Error::Malformed("not a grid field file".into()));
        }
        if head[4] != 1 {
            return Err(Error::Malformed("unsupported byte order".into()));
        }
        let boundary = match head[5] {
            0 => Boundary::Dirichlet,
            1 => Boundary::Periodic,
            b => return Err(Error::Malformed(format!("unknown boundary flag {b}"))),
        };
        let ndim = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
        if ndim == 0 || ndim > 16 {
            return Err(Error::Malformed(format!("implausible dimension {ndim}")));
        }
        let mut counts = Vec::new();
        let mut origin = Vec::new();
        let mut spacing = Vec::new();
        let mut b8 = [0u8; 8];
        for _ in 0..ndim {
            r.read_exact(&mut b8)?;
            counts.push(u64::from_le_bytes(b8) as usize);
            r.read_exact(&mut b8)?;
            origin.push(u64::from_le_bytes(b8) as usize);
            r.read_exact(&mut b8)?;
            spacing.push(f64::from_le_bytes(b8));
        }
        let spec = GridSpec::from_parts(counts, spacing, origin, boundary)?;
        let mut raw = vec![0u8; 8 * spec.len()];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { spec, values })
    }
}

/// Sum with a fixed chunking so the result does not depend on the thread
/// count.
pub fn det_sum(v: &[f64]) -> f64 {
    let partial: Vec<f64> = v.par_chunks(SUM_CHUNK).map(|c| c.iter().sum()).collect();
    partial.iter().sum()
}

/// Weighted tap into a neighbouring row: vertical offsets per vertical axis.
#[derive(Clone, Debug)]
struct Tap {
    offsets: Vec<isize>,
    weight: f64,
}

#[derive(Clone, Debug)]
struct Shift {
    row: usize,
    taps: Vec<Tap>,
}

#[derive(Clone, Debug)]
struct RowStencil {
    /// `shifts[2k]` is `x * (+h e_k)`, `shifts[2k+1]` is `x * (-h e_k)`.
    shifts: Vec<Option<Shift>>,
    /// Per vertical axis, the node range where the full stencil is valid.
    valid: Option<Vec<Range<usize>>>,
}

/// The discrete sub-Laplacian and horizontal derivatives on one grid.
#[derive(Clone, Debug)]
pub struct SubLaplacianStencil {
    spec: GridSpec,
    d: usize,
    hspec: Vec<usize>,
    vshape: Vec<usize>,
    vlen: usize,
    rows: Vec<RowStencil>,
    inv_h2: Vec<f64>,
    sigma_dimless: f64,
}

impl SubLaplacianStencil {
    pub fn new(alg: &StratifiedAlgebra, spec: &GridSpec) -> Result<Self> {
        if alg.step() > 2 {
            return Err(Error::UnsupportedStep(alg.step()));
        }
        let n = alg.total_dim();
        if spec.ndim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: spec.ndim(),
            });
        }
        let d = alg.horizontal_dim();
        let periodic = spec.boundary == Boundary::Periodic;
        if periodic {
            check_lattice(alg, spec)?;
        }
        let hspec: Vec<usize> = spec.counts[..d].to_vec();
        let vshape: Vec<usize> = spec.counts[d..].to_vec();
        let vlen: usize = vshape.iter().product();
        let nrows: usize = hspec.iter().product();
        let h = &spec.spacing;

        let rows: Vec<RowStencil> = (0..nrows)
            .into_par_iter()
            .map(|row| build_row(alg, spec, d, &hspec, &vshape, row))
            .collect::<Result<_>>()?;

        let inv_h2: Vec<f64> = h[..d].iter().map(|v| 1.0 / (v * v)).collect();
        let hmin = h[..d].iter().cloned().fold(f64::INFINITY, f64::min);
        let mut sigma: f64 = 0.0;
        for r in &rows {
            let mut s = 0.0;
            for k in 0..d {
                s += 2.0 * inv_h2[k];
                for sh in r.shifts[2 * k..2 * k + 2].iter().flatten() {
                    s += sh.taps.iter().map(|t| t.weight.abs()).sum::<f64>() * inv_h2[k];
                }
            }
            sigma = sigma.max(s);
        }
        Ok(Self {
            spec: spec.clone(),
            d,
            hspec,
            vshape,
            vlen,
            rows,
            inv_h2,
            sigma_dimless: sigma * hmin * hmin,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn horizontal_dim(&self) -> usize {
        self.d
    }

    /// Smallest horizontal spacing.
    pub fn h_min(&self) -> f64 {
        self.spec.spacing[..self.d]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Worst-node sum of absolute stencil weights, times `h_min^2`.
    pub fn sigma_dimless(&self) -> f64 {
        self.sigma_dimless
    }

    /// Largest explicit Euler step keeping the update monotone.
    pub fn stability_bound(&self) -> f64 {
        1.0 / (2.0 * self.inv_h2.iter().sum::<f64>())
    }

    /// Default heat step `0.4 h_min^2 / sigma`.
    pub fn heat_dt(&self) -> f64 {
        0.4 * self.h_min().powi(2) / self.sigma_dimless
    }

    /// Default wave step `0.5 h_min / sqrt(sigma)`.
    pub fn wave_dt(&self) -> f64 {
        0.5 * self.h_min() / self.sigma_dimless.sqrt()
    }

    fn row_of(&self, flat: usize) -> (usize, usize) {
        (flat / self.vlen, flat % self.vlen)
    }

    /// Whether the full stencil at a node reads only real grid values
    /// outside the sponge.
    pub fn is_valid(&self, flat: usize) -> bool {
        let (row, mut v) = self.row_of(flat);
        match &self.rows[row].valid {
            None => false,
            Some(ranges) => {
                for m in (0..self.vshape.len()).rev() {
                    let i = v % self.vshape[m];
                    v /= self.vshape[m];
                    if !ranges[m].contains(&i) {
                        return false;
                    }
                }
                true
            }
        }
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        (0..self.spec.len())
            .into_par_iter()
            .map(|i| self.is_valid(i))
            .collect()
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.spec.len() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.len(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `out = L u`.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(u)?;
        self.check_len(out)?;
        let periodic = self.spec.boundary == Boundary::Periodic;
        let diag: f64 = -2.0 * self.inv_h2.iter().sum::<f64>();
        out.par_chunks_mut(self.vlen)
            .enumerate()
            .for_each(|(row, o)| {
                let src = &u[row * self.vlen..(row + 1) * self.vlen];
                for (oi, si) in o.iter_mut().zip(src) {
                    *oi = diag * si;
                }
                let rs = &self.rows[row];
                for k in 0..self.d {
                    for sh in rs.shifts[2 * k..2 * k + 2].iter().flatten() {
                        let nb = &u[sh.row * self.vlen..(sh.row + 1) * self.vlen];
                        for t in &sh.taps {
                            add_shifted(o, nb, &self.vshape, &t.offsets, t.weight * self.inv_h2[k], periodic);
                        }
                    }
                }
            });
        Ok(())
    }

    pub fn apply(&self, u: &GridField) -> Result<GridField> {
        let mut out = vec![0.0; u.values.len()];
        self.apply_into(&u.values, &mut out)?;
        GridField::from_values(&self.spec, out)
    }

    /// `out = f(x * (sign h e_k))` with zero or periodic extension.
    pub fn translate_into(&self, u: &[f64], k: usize, forward: bool, out: &mut [f64]) -> Result<()> {
        self.check_len(u)?;
        self.check_len(out)?;
        if k >= self.d {
            return Err(invalid("k", "not a horizontal direction"));
        }
        let periodic = self.spec.boundary == Boundary::Periodic;
        let slot = 2 * k + usize::from(!forward);
        out.par_chunks_mut(self.vlen)
            .enumerate()
            .for_each(|(row, o)| {
                o.iter_mut().for_each(|v| *v = 0.0);
                if let Some(sh) = &self.rows[row].shifts[slot] {
                    let nb = &u[sh.row * self.vlen..(sh.row + 1) * self.vlen];
                    for t in &sh.taps {
                        add_shifted(o, nb, &self.vshape, &t.offsets, t.weight, periodic);
                    }
                }
            });
        Ok(())
    }

    /// Centred approximation of `X_k u`.
    pub fn field_derivative(&self, u: &[f64], k: usize) -> Result<Vec<f64>> {
        let mut plus = vec![0.0; u.len()];
        let mut minus = vec![0.0; u.len()];
        self.translate_into(u, k, true, &mut plus)?;
        self.translate_into(u, k, false, &mut minus)?;
        let s = 0.5 / self.spec.spacing[k];
        plus.par_iter_mut()
            .zip(&minus)
            .for_each(|(p, m)| *p = (*p - m) * s);
        Ok(plus)
    }

    /// Centred vertical derivative along vertical axis `m`.
    pub fn vertical_derivative(&self, u: &[f64], m: usize) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let nv = self.vshape.len();
        if m >= nv {
            return Err(invalid("m", "not a vertical direction"));
        }
        let periodic = self.spec.boundary == Boundary::Periodic;
        let s = 0.5 / self.spec.spacing[self.d + m];
        let mut offs = vec![0isize; nv];
        let mut out = vec![0.0; u.len()];
        out.par_chunks_mut(self.vlen)
            .zip(u.par_chunks(self.vlen))
            .for_each(|(o, src)| {
                let mut of = offs.clone();
                of[m] = 1;
                add_shifted(o, src, &self.vshape, &of, s, periodic);
                of[m] = -1;
                add_shifted(o, src, &self.vshape, &of, -s, periodic);
            });
        offs.clear();
        Ok(out)
    }

    /// `Gamma(u) = sum_k (X_k u)^2` on the grid.
    pub fn gamma(&self, u: &GridField) -> Result<GridField> {
        let mut acc = vec![0.0; u.values.len()];
        for k in 0..self.d {
            let xk = self.field_derivative(&u.values, k)?;
            acc.par_iter_mut().zip(&xk).for_each(|(a, v)| *a += v * v);
        }
        GridField::from_values(&self.spec, acc)
    }

    /// `Gamma^Z(u) = sum_m (Z_m u)^2` with `Z_m` the vertical partials.
    pub fn gamma_z(&self, u: &GridField) -> Result<GridField> {
        if self.vshape.is_empty() {
            return Err(Error::WrongStep {
                required: 2,
                got: 1,
            });
        }
        let mut acc = vec![0.0; u.values.len()];
        for m in 0..self.vshape.len() {
            let zm = self.vertical_derivative(&u.values, m)?;
            acc.par_iter_mut().zip(&zm).for_each(|(a, v)| *a += v * v);
        }
        GridField::from_values(&self.spec, acc)
    }

    /// Number of horizontal rows and the length of each vertical block.
    pub fn layout(&self) -> (usize, usize) {
        (self.hspec.iter().product(), self.vlen)
    }
}

/// Check that the periodic box is a lattice quotient: the product of two
/// horizontal generators must differ from their sum by a vertical period
/// multiple.
fn check_lattice(alg: &StratifiedAlgebra, spec: &GridSpec) -> Result<()> {
    let d = alg.horizontal_dim();
    let n = alg.total_dim();
    let period: Vec<f64> = (0..n)
        .map(|j| spec.counts[j] as f64 * spec.spacing[j])
        .collect();
    for i in 0..d {
        for j in i + 1..d {
            for m in d..n {
                let c = 0.5 * period[i] * period[j] * alg.structure_constant(i, j, m);
                let q = c / period[m];
                if (q - q.round()).abs() > 1e-9 {
                    return Err(Error::IncompatiblePeriodicGrid(format!(
                        "1/2 L_{i} L_{j} c_{i}{j}^{m} = {c} is not a multiple of the period {}",
                        period[m]
                    )));
                }
            }
        }
    }
    Ok(())
}

fn build_row(
    alg: &StratifiedAlgebra,
    spec: &GridSpec,
    d: usize,
    hspec: &[usize],
    vshape: &[usize],
    row: usize,
) -> Result<RowStencil> {
    let n = alg.total_dim();
    let nv = n - d;
    let periodic = spec.boundary == Boundary::Periodic;
    let mut hidx = vec![0usize; d];
    {
        let mut r = row;
        for j in (0..d).rev() {
            hidx[j] = r % hspec[j];
            r /= hspec[j];
        }
    }
    let mut x = vec![0.0; n];
    for j in 0..d {
        x[j] = spec.coord(j, hidx[j]);
    }

    let mut shifts = Vec::with_capacity(2 * d);
    let mut valid_ranges: Vec<Range<usize>> = vshape
        .iter()
        .enumerate()
        .map(|(m, &c)| {
            let w = spec.sponge_width(d + m);
            w..c - w
        })
        .collect();
    let mut row_valid = (0..d).all(|j| {
        let w = spec.sponge_width(j);
        hidx[j] >= w && hidx[j] + w < hspec[j]
    });

    for k in 0..d {
        for &sign in &[1.0, -1.0] {
            let h = spec.spacing[k];
            let mut step = vec![0.0; n];
            step[k] = sign * h;
            let mut y = alg.multiply_slices(&x, &step);
            let target = hidx[k] as isize + sign as isize;
            let mut nidx = hidx.clone();
            if target < 0 || target >= hspec[k] as isize {
                if !periodic {
                    shifts.push(None);
                    row_valid = false;
                    continue;
                }
                let period = hspec[k] as f64 * h;
                let mut g = vec![0.0; n];
                g[k] = -sign * period;
                y = alg.multiply_slices(&g, &y);
                nidx[k] = target.rem_euclid(hspec[k] as isize) as usize;
            } else {
                nidx[k] = target as usize;
            }
            for j in 0..d {
                let want = spec.coord(j, nidx[j]);
                if (y[j] - want).abs() > 1e-9 * (1.0 + want.abs()) {
                    return Err(Error::Malformed(format!(
                        "horizontal translate missed the grid on axis {j}"
                    )));
                }
            }
            let mut nrow = 0;
            for j in 0..d {
                nrow = nrow * hspec[j] + nidx[j];
            }

            // Tensor-product linear interpolation in the vertical offset.
            let mut taps = vec![Tap {
                offsets: Vec::with_capacity(nv),
                weight: 1.0,
            }];
            for m in 0..nv {
                let o = y[d + m] / spec.spacing[d + m];
                let fl = o.floor();
                let mut frac = o - fl;
                let mut base = fl as isize;
                if frac > 1.0 - 1e-9 {
                    base += 1;
                    frac = 0.0;
                } else if frac < 1e-9 {
                    frac = 0.0;
                }
                let mut next = Vec::with_capacity(taps.len() * 2);
                for t in &taps {
                    let mut a = t.clone();
                    a.offsets.push(base);
                    a.weight *= 1.0 - frac;
                    next.push(a);
                    if frac > 0.0 {
                        let mut b = t.clone();
                        b.offsets.push(base + 1);
                        b.weight *= frac;
                        next.push(b);
                    }
                }
                taps = next;
            }
            if !periodic {
                for t in &taps {
                    for (m, &o) in t.offsets.iter().enumerate() {
                        let c = vshape[m] as isize;
                        let lo = (-o).max(0) as usize;
                        let hi = (c - o).clamp(0, c) as usize;
                        let r = &mut valid_ranges[m];
                        *r = r.start.max(lo)..r.end.min(hi);
                    }
                }
            }
            shifts.push(Some(Shift { row: nrow, taps }));
        }
    }

    let valid = if periodic {
        Some(vshape.iter().map(|&c| 0..c).collect())
    } else if row_valid && valid_ranges.iter().all(|r| r.start < r.end) {
        Some(valid_ranges)
    } else {
        None
    };
    Ok(RowStencil { shifts, valid })
}

/// `out[v] += w * src[v + offs]` over a vertical block, with zero or
/// periodic extension along every vertical axis.
fn add_shifted(out: &mut [f64], src: &[f64], shape: &[usize], offs: &[isize], w: f64, periodic: bool) {
    if shape.is_empty() {
        out[0] += w * src[0];
        return;
    }
    let c = shape[0] as isize;
    let o = offs[0];
    if shape.len() == 1 {
        if periodic {
            let o = o.rem_euclid(c) as usize;
            let c = c as usize;
            let split = c - o;
            for (dst, s) in out[..split].iter_mut().zip(&src[o..]) {
                *dst += w * s;
            }
            for (dst, s) in out[split..].iter_mut().zip(&src[..o]) {
                *dst += w * s;
            }
        } else {
            let lo = (-o).clamp(0, c) as usize;
            let hi = (c - o).clamp(0, c) as usize;
            if lo < hi {
                let so = (lo as isize + o) as usize;
                for (dst, s) in out[lo..hi].iter_mut().zip(&src[so..so + hi - lo]) {
                    *dst += w * s;
                }
            }
        }
        return;
    }
    let stride: usize = shape[1..].iter().product();
    for v in 0..c {
        let t = v + o;
        let t = if periodic {
            t.rem_euclid(c)
        } else if t < 0 || t >= c {
            continue;
        } else {
            t
        };
        let (v, t) = (v as usize, t as usize);
        add_shifted(
            &mut out[v * stride..(v + 1) * stride],
            &src[t * stride..(t + 1) * stride],
            &shape[1..],
            &offs[1..],
            w,
            periodic,
        );
    }
}

/// One row of a convergence table.
#[derive(Clone, Debug, Serialize)]
pub struct FdRow {
    pub h: f64,
    /// Max error of the discrete sub-Laplacian over the probe box.
    pub error: f64,
    /// Error of the previous (coarser) row divided by this one.
    pub ratio: Option<f64>,
}

/// Compare the stencil against `ops.sub_laplacian_at(f)` on each grid,
/// over valid nodes inside the box `|x_j| <= probe[j]`.
pub fn fd_convergence_report(
    alg: &StratifiedAlgebra,
    f: &dyn SmoothFn,
    specs: &[GridSpec],
    probe: &[f64],
) -> Result<Vec<FdRow>> {
    let ops = DiffOps::new(alg);
    let mut rows: Vec<FdRow> = Vec::with_capacity(specs.len());
    for spec in specs {
        if probe.len() != spec.ndim() {
            return Err(Error::DimensionMismatch {
                expected: spec.ndim(),
                got: probe.len(),
            });
        }
        let st = SubLaplacianStencil::new(alg, spec)?;
        let u = GridField::from_fn(spec, |x| f.value(x));
        let lu = st.apply(&u)?;
        let error = (0..spec.len())
            .into_par_iter()
            .filter(|&i| st.is_valid(i))
            .map_init(
                || vec![0.0; spec.ndim()],
                |x, i| {
                    spec.node_coords(i, x);
                    if x.iter().zip(probe).all(|(v, b)| v.abs() <= *b) {
                        (lu.values[i] - ops.sub_laplacian_at(f, x)).abs()
                    } else {
                        0.0
                    }
                },
            )
            .reduce(|| 0.0, f64::max);
        let ratio = rows.last().map(|r| r.error / error);
        rows.push(FdRow {
            h: st.h_min(),
            error,
            ratio,
        });
    }
    Ok(rows)
}

/// `|<f, L g> - <g, L f>| / (|f| |L g|)` with discrete inner products.
pub fn symmetry_residual(stencil: &SubLaplacianStencil, f: &GridField, g: &GridField) -> Result<f64> {
    let lf = stencil.apply(f)?;
    let lg = stencil.apply(g)?;
    let dot = |a: &[f64], b: &[f64]| det_sum(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>());
    let a = dot(&f.values, &lg.values);
    let b = dot(&g.values, &lf.values);
    let scale = dot(&f.values, &f.values).sqrt() * dot(&lg.values, &lg.values).sqrt();
    Ok(if scale == 0.0 { 0.0 } else { (a - b).abs() / scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{Poly, PolyJetEval};

    fn h1() -> StratifiedAlgebra {
        StratifiedAlgebra::heisenberg(1).unwrap()
    }

    #[test]
    fn spec_contains_origin() {
        let g = GridSpec::dirichlet(&[1.0, 1.0, 0.5], &[0.25, 0.25, 0.0625]).unwrap();
        assert_eq!(g.counts(), &[9, 9, 17]);
        let mut c = [0.0; 3];
        g.node_coords(g.origin_flat(), &mut c);
        assert_eq!(c, [0.0, 0.0, 0.0]);
        assert!(GridSpec::dirichlet(&[0.1], &[0.1]).is_err());
    }

    #[test]
    fn exact_on_graded_quadratics() {
        let alg = h1();
        let ops = DiffOps::new(&alg);
        let spec = GridSpec::graded(&alg, 1.0, 1.0, 0.125).unwrap();
        let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
        let x = Poly::var(3, 0);
        let y = Poly::var(3, 1);
        let t = Poly::var(3, 2);
        let f = &(&(&(&x * &x) + &(&x * &y)) + &(&(&y * &y).scale(3.0) + &t)) + &x;
        let lf = ops.sub_laplacian_poly(&f);
        let u = GridField::from_fn(&spec, |p| f.eval(p));
        let lu = st.apply(&u).unwrap();
        let mut p = [0.0; 3];
        let mut checked = 0;
        for i in 0..spec.len() {
            if st.is_valid(i) {
                spec.node_coords(i, &mut p);
                assert!((lu.values[i] - lf.eval(&p)).abs() < 1e-9, "node {p:?}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn second_order_convergence() {
        let alg = h1();
        let ops = DiffOps::new(&alg);
        let gauge = alg.gauge_poly();
        let f = crate::diffops::ProfileOfPoly::new(&gauge, |q| {
            let e = (-q).exp();
            [e, -e, e]
        });
        let mut errs = Vec::new();
        for &h in &[0.1, 0.05] {
            let spec = GridSpec::graded(&alg, 2.0, 2.0, h).unwrap();
            let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
            let u = GridField::from_fn(&spec, |p| crate::diffops::SmoothFn::value(&f, p));
            let lu = st.apply(&u).unwrap();
            let mut p = [0.0; 3];
            let mut e: f64 = 0.0;
            for i in 0..spec.len() {
                spec.node_coords(i, &mut p);
                if st.is_valid(i) && p.iter().all(|v| v.abs() <= 1.0) {
                    e = e.max((lu.values[i] - ops.sub_laplacian_at(&f, &p)).abs());
                }
            }
            errs.push(e);
        }
        let ratio = errs[0] / errs[1];
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio} errs {errs:?}");
    }

    #[test]
    fn symmetric_and_mass_conserving() {
        let alg = h1();
        let spec = GridSpec::graded(&alg, 1.5, 1.5, 0.125).unwrap();
        let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
        let bump = |c: [f64; 3]| {
            move |p: &[f64]| {
                let r2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2);
                (1.0 - r2 / 0.36).max(0.0).powi(4)
            }
        };
        let f = GridField::from_fn(&spec, bump([0.1, -0.2, 0.15]));
        let g = GridField::from_fn(&spec, bump([-0.15, 0.1, -0.1]));
        let lf = st.apply(&f).unwrap();
        let lg = st.apply(&g).unwrap();
        let a: f64 = f.values.iter().zip(&lg.values).map(|(x, y)| x * y).sum();
        let b: f64 = g.values.iter().zip(&lf.values).map(|(x, y)| x * y).sum();
        let nf = f.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ng = g.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((a - b).abs() <= 1e-8 * nf * ng * st.sigma_dimless() / st.h_min().powi(2));
        assert!(lf.sum().abs() < 1e-9 * f.sum() / st.h_min().powi(2));
    }

    #[test]
    fn periodic_requires_lattice() {
        let alg = h1();
        let ok = GridSpec::periodic(&[1.0, 1.0, 0.5], &[16, 16, 256]).unwrap();
        assert!(SubLaplacianStencil::new(&alg, &ok).is_ok());
        let bad = GridSpec::periodic(&[1.0, 1.0, 0.3], &[16, 16, 256]).unwrap();
        assert!(matches!(
            SubLaplacianStencil::new(&alg, &bad),
            Err(Error::IncompatiblePeriodicGrid(_))
        ));
    }

    #[test]
    fn periodic_constants_and_symmetry() {
        let alg = h1();
        let spec = GridSpec::periodic(&[1.0, 1.0, 0.5], &[16, 16, 256]).unwrap();
        let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
        let one = GridField::from_fn(&spec, |_| 1.0);
        assert!(st.apply(&one).unwrap().max_abs() < 1e-9);
        let f = GridField::from_fn(&spec, |p| (p[0] * 6.0).sin() + (p[2] * 12.566).cos() * p[1]);
        let g = GridField::from_fn(&spec, |p| (p[1] * std::f64::consts::TAU).cos() * (1.0 + p[2]));
        let lf = st.apply(&f).unwrap();
        let lg = st.apply(&g).unwrap();
        let a: f64 = f.values.iter().zip(&lg.values).map(|(x, y)| x * y).sum();
        let b: f64 = g.values.iter().zip(&lf.values).map(|(x, y)| x * y).sum();
        assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn rejects_step_three() {
        let alg = StratifiedAlgebra::engel().unwrap();
        let spec = GridSpec::dirichlet(&[1.0; 4], &[0.25; 4]).unwrap();
        assert!(matches!(
            SubLaplacianStencil::new(&alg, &spec),
            Err(Error::UnsupportedStep(3))
        ));
    }

    #[test]
    fn grid_gamma_matches_analytic() {
        let alg = h1();
        let ops = DiffOps::new(&alg);
        let spec = GridSpec::graded(&alg, 1.0, 1.0, 0.0625).unwrap();
        let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
        let x = Poly::var(3, 0);
        let t = Poly::var(3, 2);
        let f = &(&x * &t) + &x;
        let jet = PolyJetEval::new(&f);
        let u = GridField::from_fn(&spec, |p| f.eval(p));
        let g = st.gamma(&u).unwrap();
        let gz = st.gamma_z(&u).unwrap();
        let mut p = [0.0; 3];
        for i in (0..spec.len()).step_by(37) {
            if st.is_valid(i) {
                spec.node_coords(i, &mut p);
                assert!((g.values[i] - ops.gamma_at(&jet, &p)).abs() < 1e-6);
                assert!((gz.values[i] - ops.gamma_z_at(&jet, &p).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn binary_round_trip() {
        let spec = GridSpec::periodic(&[1.0, 2.0], &[8, 6]).unwrap();
        let f = GridField::from_fn(&spec, |p| p[0] - 3.0 * p[1]);
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        let g = GridField::read_from(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        assert!(GridField::read_from(&b"XXXX"[..]).is_err());
    }
}
