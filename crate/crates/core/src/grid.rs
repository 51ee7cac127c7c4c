//! Uniform grids on `[-L, L)^N` and the discrete Fourier transform that
//! stands in for the continuous transform
//!
//! ```text
//! f^(xi) = \int exp(-i x.xi) f(x) dx,    f(x) = (2 pi)^{-N} \int exp(i x.xi) f^(xi) dxi.
//! ```
//!
//! Physical nodes are `x_j = -L + j dx`, `dx = 2L/M`. Frequency samples are
//! stored in FFT order: storage index `j` holds the signed index
//! `k = j` for `j < M/2` and `k = j - M` otherwise, at `xi_k = k dxi` with
//! `dxi = pi/L`. Because `xi_k L = k pi`, the origin-shift phase
//! `exp(i xi_k L)` is exactly `(-1)^k`, so the mapping between the
//! continuous convention and the DFT is a sign pattern plus the constant
//! factors `dx^N` (forward) and `(dxi / 2 pi)^N` (inverse).

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64, ZERO};

/// Relative amplitude below which samples on the box boundary count as decayed.
pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 1e-12;

/// Relative spectral energy allowed in the top octave before a function is
/// reported as under-resolved.
pub const DEFAULT_RESOLUTION_THRESHOLD: f64 = 1e-20;

/// Highest total derivative order accepted by [`spectral_derivative`].
pub const MAX_DERIVATIVE_ORDER: usize = 6;

/// Diagnostic flags attached to numerical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// Samples do not decay at the box boundary.
    TruncationSuspect,
    /// Spectral energy in the top octave exceeds the resolution threshold.
    UnderResolved,
    /// The top Littlewood-Paley block carries more than 1% of a norm.
    TopBlockDominant,
    /// A symbol without a closed form could not be rescaled.
    SampleOnlySymbol,
    /// The reported constant is a lower bound of the true constant.
    LowerBound,
    /// The reported constant is an upper bound of the true constant.
    UpperBound,
    /// A finite-difference derivative of a sampled symbol was taken across
    /// unresolved structure.
    DerivativeUnresolved,
    /// A degenerate sample point (zero or infinite weight) was skipped.
    DegeneratePoint,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Flag::TruncationSuspect => "truncation-suspect",
            Flag::UnderResolved => "under-resolved",
            Flag::TopBlockDominant => "top-block-dominant",
            Flag::SampleOnlySymbol => "sample-only-symbol",
            Flag::LowerBound => "lower-bound",
            Flag::UpperBound => "upper-bound",
            Flag::DerivativeUnresolved => "derivative-unresolved",
            Flag::DegeneratePoint => "degenerate-point",
        };
        f.write_str(s)
    }
}

/// A value together with the diagnostics raised while computing it.
#[derive(Debug, Clone)]
pub struct Flagged<T> {
    pub value: T,
    pub flags: Vec<Flag>,
}

impl<T> Flagged<T> {
    pub fn clean(value: T) -> Self {
        Flagged {
            value,
            flags: Vec::new(),
        }
    }
}

pub(crate) fn push_flag(flags: &mut Vec<Flag>, flag: Flag) {
    if !flags.contains(&flag) {
        flags.push(flag);
    }
}

/// Uniform tensor grid on `[-L, L)^N` with `M` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points: usize,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half-width {half_width} must be positive")));
        }
        if points < 4 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "{points} points per axis is not a power of two >= 4"
            )));
        }
        Ok(Grid {
            dim,
            half_width,
            points,
        })
    }

    /// Desk-scale default: `N = 1, L = 32, M = 4096`.
    pub fn default_1d() -> Self {
        Grid {
            dim: 1,
            half_width: 32.0,
            points: 4096,
        }
    }

    /// Desk-scale default: `N = 2, L = 16, M = 256`.
    pub fn default_2d() -> Self {
        Grid {
            dim: 2,
            half_width: 16.0,
            points: 256,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    /// Total node count `M^N`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn dxi(&self) -> f64 {
        PI / self.half_width
    }

    pub fn xi_max(&self) -> f64 {
        PI / self.dx()
    }

    /// Same box, twice the points per axis.
    pub fn refined(&self) -> Self {
        Grid {
            points: self.points * 2,
            ..*self
        }
    }

    /// Same spacing, twice the box (the frequency grid is refined).
    pub fn extended(&self) -> Self {
        Grid {
            points: self.points * 2,
            half_width: self.half_width * 2.0,
            ..*self
        }
    }

    /// Grid whose physical nodes coincide with this grid's frequency nodes.
    pub fn dual(&self) -> Self {
        Grid {
            half_width: self.xi_max(),
            ..*self
        }
    }

    pub fn cell_volume(&self, domain: Domain) -> f64 {
        let h = match domain {
            Domain::Physical => self.dx(),
            Domain::Frequency => self.dxi(),
        };
        h.powi(self.dim as i32)
    }

    pub fn axis_indices(&self, flat: usize) -> [usize; 2] {
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / self.points, flat % self.points]
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.points + idx[1]
        }
    }

    /// Signed frequency index for an FFT-ordered storage index.
    pub fn signed_index(&self, j: usize) -> i64 {
        if j < self.points / 2 {
            j as i64
        } else {
            j as i64 - self.points as i64
        }
    }

    /// Storage index for a signed frequency index in `[-M/2, M/2)`.
    pub fn storage_index(&self, k: i64) -> usize {
        k.rem_euclid(self.points as i64) as usize
    }

    pub fn x_axis(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn xi_axis(&self, j: usize) -> f64 {
        self.signed_index(j) as f64 * self.dxi()
    }

    /// Coordinates of node `flat` on the given side; unused trailing entries
    /// are zero.
    pub fn coords(&self, domain: Domain, flat: usize) -> [f64; 2] {
        let idx = self.axis_indices(flat);
        let mut out = [0.0; 2];
        for a in 0..self.dim {
            out[a] = match domain {
                Domain::Physical => self.x_axis(idx[a]),
                Domain::Frequency => self.xi_axis(idx[a]),
            };
        }
        out
    }

    /// Index of the physical node at the origin along one axis.
    pub fn origin_axis_index(&self) -> usize {
        self.points / 2
    }
}

/// Which side of the transform a sample set lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Physical,
    Frequency,
}

/// Shape of the value at each node: a vector in `C^d` or a `d x d` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fiber {
    Vector(usize),
    Matrix(usize),
}

impl Fiber {
    pub fn dim(&self) -> usize {
        match *self {
            Fiber::Vector(d) | Fiber::Matrix(d) => d,
        }
    }

    pub fn components(&self) -> usize {
        match *self {
            Fiber::Vector(d) => d,
            Fiber::Matrix(d) => d * d,
        }
    }

    /// Euclidean norm for vectors, spectral norm for matrices.
    pub fn norm(&self, v: &[C64]) -> f64 {
        match *self {
            Fiber::Vector(_) => linalg::vec_norm(v),
            Fiber::Matrix(d) => linalg::op_norm(v, d),
        }
    }
}

/// A `C^d`- or `C^{d x d}`-valued function sampled on a [`Grid`].
///
/// Values are node-major: the components of node `n` occupy
/// `values[n * c .. (n + 1) * c]` with `c = fiber.components()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    domain: Domain,
    fiber: Fiber,
    values: Vec<C64>,
}

impl SampledFunction {
    pub fn zeros(grid: Grid, domain: Domain, fiber: Fiber) -> Self {
        SampledFunction {
            grid,
            domain,
            fiber,
            values: vec![ZERO; grid.len() * fiber.components()],
        }
    }

    pub fn from_values(grid: Grid, domain: Domain, fiber: Fiber, values: Vec<C64>) -> Result<Self> {
        let comps = fiber.components();
        if fiber.dim() == 0 {
            return Err(Error::DimensionMismatch("fiber dimension must be positive".into()));
        }
        if values.len() != grid.len() * comps {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} nodes x {} components",
                values.len(),
                grid.len(),
                comps
            )));
        }
        if let Some(pos) = values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite { node: pos / comps });
        }
        Ok(SampledFunction {
            grid,
            domain,
            fiber,
            values,
        })
    }

    /// Sample `eval(x, out)` at every node of the chosen side.
    pub fn from_fn<F>(grid: Grid, domain: Domain, fiber: Fiber, mut eval: F) -> Result<Self>
    where
        F: FnMut(&[f64], &mut [C64]),
    {
        let comps = fiber.components();
        let mut values = vec![ZERO; grid.len() * comps];
        for (n, chunk) in values.chunks_mut(comps).enumerate() {
            let x = grid.coords(domain, n);
            eval(&x[..grid.dim()], chunk);
        }
        SampledFunction::from_values(grid, domain, fiber, values)
    }

    /// Scalar real function sampled on the physical side.
    pub fn scalar<F: Fn(&[f64]) -> f64>(grid: Grid, f: F) -> Result<Self> {
        SampledFunction::from_fn(grid, Domain::Physical, Fiber::Vector(1), |x, out| {
            out[0] = C64::new(f(x), 0.0)
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn fiber(&self) -> Fiber {
        self.fiber
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn node(&self, n: usize) -> &[C64] {
        let c = self.fiber.components();
        &self.values[n * c..(n + 1) * c]
    }

    pub fn nodes(&self) -> std::slice::ChunksExact<'_, C64> {
        self.values.chunks_exact(self.fiber.components())
    }

    pub fn node_norm(&self, n: usize) -> f64 {
        self.fiber.norm(self.node(n))
    }

    pub fn max_norm(&self) -> f64 {
        self.nodes().map(|v| self.fiber.norm(v)).fold(0.0, f64::max)
    }

    /// Unweighted discrete L2 norm with the cell volume of this side.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|z| z.norm_sqr()).sum();
        (s * self.grid.cell_volume(self.domain)).sqrt()
    }

    pub fn is_compatible(&self, other: &SampledFunction) -> bool {
        self.grid == other.grid && self.domain == other.domain && self.fiber == other.fiber
    }

    fn check_compatible(&self, other: &SampledFunction) -> Result<()> {
        if self.grid != other.grid || self.domain != other.domain {
            return Err(Error::GridMismatch);
        }
        if self.fiber != other.fiber {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.fiber, other.fiber
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, a: C64) -> SampledFunction {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|z| *z *= a);
        out
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: C64, other: &SampledFunction, b: C64) -> Result<SampledFunction> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(SampledFunction {
            grid: self.grid,
            domain: self.domain,
            fiber: self.fiber,
            values,
        })
    }

    pub fn add(&self, other: &SampledFunction) -> Result<SampledFunction> {
        self.combine(linalg::ONE, other, linalg::ONE)
    }

    pub fn sub(&self, other: &SampledFunction) -> Result<SampledFunction> {
        self.combine(linalg::ONE, other, -linalg::ONE)
    }

    /// Apply `map(node_values, out)` at every node, producing a function with
    /// fiber `fiber_out` on the same side.
    pub fn map_nodes<F>(&self, fiber_out: Fiber, mut map: F) -> SampledFunction
    where
        F: FnMut(usize, &[C64], &mut [C64]),
    {
        let cin = self.fiber.components();
        let cout = fiber_out.components();
        let mut values = vec![ZERO; self.grid.len() * cout];
        for (n, out) in values.chunks_mut(cout).enumerate() {
            map(n, &self.values[n * cin..(n + 1) * cin], out);
        }
        SampledFunction {
            grid: self.grid,
            domain: self.domain,
            fiber: fiber_out,
            values,
        }
    }

    /// Frequency samples viewed as a physical-side function on
    /// [`Grid::dual`]: FFT order is shifted into ascending node order.
    pub(crate) fn frequency_as_physical(&self) -> SampledFunction {
        debug_assert_eq!(self.domain, Domain::Frequency);
        let grid = self.grid;
        let comps = self.fiber.components();
        let half = grid.points / 2;
        let mut values = Vec::with_capacity(self.values.len());
        for n in 0..grid.len() {
            let idx = grid.axis_indices(n);
            let mut src = [0usize; 2];
            for a in 0..grid.dim {
                src[a] = (idx[a] + half) % grid.points;
            }
            let m = grid.flat_index(src);
            values.extend_from_slice(&self.values[m * comps..(m + 1) * comps]);
        }
        SampledFunction {
            grid: grid.dual(),
            domain: Domain::Physical,
            fiber: self.fiber,
            values,
        }
    }

    /// Ratio of the largest boundary sample to the largest sample.
    pub fn boundary_ratio(&self) -> f64 {
        let peak = self.max_norm();
        if peak == 0.0 {
            return 0.0;
        }
        let m = self.grid.points;
        let mut edge: f64 = 0.0;
        for n in 0..self.grid.len() {
            let idx = self.grid.axis_indices(n);
            let on_edge = (0..self.grid.dim).any(|a| idx[a] == 0 || idx[a] == m - 1);
            if on_edge {
                edge = edge.max(self.node_norm(n));
            }
        }
        edge / peak
    }

    /// Diagnostics for a physical-side function: boundary decay and spectral
    /// resolution.
    pub fn diagnose(&self) -> Result<Vec<Flag>> {
        let mut flags = Vec::new();
        if self.domain == Domain::Physical {
            if self.boundary_ratio() > DEFAULT_BOUNDARY_THRESHOLD {
                flags.push(Flag::TruncationSuspect);
            }
            let hat = forward_ft(self)?;
            if top_octave_fraction(&hat) > DEFAULT_RESOLUTION_THRESHOLD {
                flags.push(Flag::UnderResolved);
            }
        } else if top_octave_fraction(self) > DEFAULT_RESOLUTION_THRESHOLD {
            flags.push(Flag::UnderResolved);
        }
        Ok(flags)
    }

    /// Write the samples as CSV.
    ///
    /// Columns: one signed or unsigned index per axis (`i0`, `i1` on the
    /// physical side, `k0`, `k1` on the frequency side), the coordinates
    /// (`x0`, `x1` or `xi0`, `xi1`), then `re_<c>`, `im_<c>` per component,
    /// where `<c>` is the component index for vectors and `<row>_<col>` for
    /// matrices. Rows follow storage order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let dim = self.grid.dim;
        let (idx_name, coord_name) = match self.domain {
            Domain::Physical => ("i", "x"),
            Domain::Frequency => ("k", "xi"),
        };
        let mut header: Vec<String> = Vec::new();
        for a in 0..dim {
            header.push(format!("{idx_name}{a}"));
        }
        for a in 0..dim {
            header.push(format!("{coord_name}{a}"));
        }
        for name in component_names(self.fiber) {
            header.push(format!("re_{name}"));
            header.push(format!("im_{name}"));
        }
        writeln!(w, "{}", header.join(","))?;
        for n in 0..self.grid.len() {
            let idx = self.grid.axis_indices(n);
            let coords = self.grid.coords(self.domain, n);
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            for &i in idx.iter().take(dim) {
                match self.domain {
                    Domain::Physical => row.push(i.to_string()),
                    Domain::Frequency => row.push(self.grid.signed_index(i).to_string()),
                }
            }
            for &c in coords.iter().take(dim) {
                row.push(format!("{c:e}"));
            }
            for z in self.node(n) {
                row.push(format!("{:e}", z.re));
                row.push(format!("{:e}", z.im));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Parse the format produced by [`SampledFunction::write_csv`].
    pub fn read_csv(text: &str, grid: Grid, domain: Domain, fiber: Fiber) -> Result<Self> {
        let comps = fiber.components();
        let skip = 2 * grid.dim();
        let mut values = vec![ZERO; grid.len() * comps];
        let mut rows = 0;
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != skip + 2 * comps {
                return Err(Error::InvalidParameter(format!(
                    "csv line {} has {} fields",
                    line_no + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("csv line {}: bad number {s:?}", line_no + 1)))
            };
            let mut idx = [0usize; 2];
            for a in 0..grid.dim() {
                let raw = fields[a].trim();
                idx[a] = match domain {
                    Domain::Physical => raw.parse::<usize>().ok(),
                    Domain::Frequency => raw.parse::<i64>().ok().map(|k| grid.storage_index(k)),
                }
                .filter(|&i| i < grid.points)
                .ok_or_else(|| Error::InvalidParameter(format!("csv line {}: bad index {raw:?}", line_no + 1)))?;
            }
            let n = grid.flat_index(idx);
            for c in 0..comps {
                values[n * comps + c] = C64::new(parse(fields[skip + 2 * c])?, parse(fields[skip + 2 * c + 1])?);
            }
            rows += 1;
        }
        if rows != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "csv has {rows} rows, grid has {} nodes",
                grid.len()
            )));
        }
        SampledFunction::from_values(grid, domain, fiber, values)
    }
}

fn component_names(fiber: Fiber) -> Vec<String> {
    match fiber {
        Fiber::Vector(d) => (0..d).map(|c| c.to_string()).collect(),
        Fiber::Matrix(d) => (0..d * d).map(|c| format!("{}_{}", c / d, c % d)).collect(),
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unnormalized DFT of every component along every axis, in place.
fn dft_in_place(values: &mut [C64], grid: &Grid, comps: usize, inverse: bool) {
    let m = grid.points;
    let fft = plan(m, inverse);
    let mut line = vec![ZERO; m];
    let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
    for c in 0..comps {
        for axis in 0..grid.dim {
            let (lines, stride, line_step) = match (grid.dim, axis) {
                (1, _) => (1, 1, 0),
                (_, 0) => (m, m, 1),
                _ => (m, 1, m),
            };
            for l in 0..lines {
                let base = l * line_step;
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = values[(base + i * stride) * comps + c];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    values[(base + i * stride) * comps + c] = *v;
                }
            }
        }
    }
}

fn parity_sign(grid: &Grid, n: usize) -> f64 {
    let idx = grid.axis_indices(n);
    let s: usize = idx.iter().take(grid.dim).sum();
    if s.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Continuous-convention Fourier transform `f^(xi) = \int e^{-i x xi} f(x) dx`
/// approximated on the grid.
pub fn forward_ft(f: &SampledFunction) -> Result<SampledFunction> {
    if f.domain != Domain::Physical {
        return Err(Error::DomainMismatch { expected: "physical" });
    }
    let grid = f.grid;
    let comps = f.fiber.components();
    let mut values = f.values.clone();
    dft_in_place(&mut values, &grid, comps, false);
    let scale = grid.cell_volume(Domain::Physical);
    for (n, chunk) in values.chunks_mut(comps).enumerate() {
        let s = scale * parity_sign(&grid, n);
        chunk.iter_mut().for_each(|z| *z *= s);
    }
    Ok(SampledFunction {
        grid,
        domain: Domain::Frequency,
        fiber: f.fiber,
        values,
    })
}

/// Inverse transform with the `(2 pi)^{-N}` factor.
pub fn inverse_ft(g: &SampledFunction) -> Result<SampledFunction> {
    if g.domain != Domain::Frequency {
        return Err(Error::DomainMismatch { expected: "frequency" });
    }
    let grid = g.grid;
    let comps = g.fiber.components();
    let mut values = g.values.clone();
    for (n, chunk) in values.chunks_mut(comps).enumerate() {
        let s = parity_sign(&grid, n);
        chunk.iter_mut().for_each(|z| *z *= s);
    }
    dft_in_place(&mut values, &grid, comps, true);
    let scale = (grid.dxi() / (2.0 * PI)).powi(grid.dim as i32);
    values.iter_mut().for_each(|z| *z *= scale);
    Ok(SampledFunction {
        grid,
        domain: Domain::Physical,
        fiber: g.fiber,
        values,
    })
}

/// Fraction of spectral energy at nodes whose largest axis frequency exceeds
/// `xi_max / 2`.
pub fn top_octave_fraction(hat: &SampledFunction) -> f64 {
    let grid = hat.grid;
    let cut = grid.xi_max() / 2.0;
    let mut top = 0.0;
    let mut total = 0.0;
    for n in 0..grid.len() {
        let xi = grid.coords(Domain::Frequency, n);
        let e: f64 = hat.node(n).iter().map(|z| z.norm_sqr()).sum();
        total += e;
        if xi.iter().take(grid.dim).any(|v| v.abs() > cut) {
            top += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        top / total
    }
}

/// `(i xi)^alpha`, with odd powers zeroed on the Nyquist row of each axis.
pub(crate) fn derivative_symbol(grid: &Grid, n: usize, alpha: &[usize]) -> C64 {
    let idx = grid.axis_indices(n);
    let mut out = linalg::ONE;
    for (a, &i) in idx.iter().enumerate().take(grid.dim) {
        let order = alpha.get(a).copied().unwrap_or(0);
        if order == 0 {
            continue;
        }
        if i == grid.points / 2 && order % 2 == 1 {
            return ZERO;
        }
        let xi = grid.xi_axis(i);
        out *= C64::new(0.0, xi).powu(order as u32);
    }
    out
}

/// `D^alpha f = F^{-1}[(i xi)^alpha f^]`.
///
/// The result carries [`Flag::UnderResolved`] when the input has spectral
/// energy in the top octave.
pub fn spectral_derivative(f: &SampledFunction, alpha: &[usize]) -> Result<Flagged<SampledFunction>> {
    if alpha.len() > f.grid.dim {
        return Err(Error::InvalidParameter(format!(
            "multi-index of length {} on a {}-d grid",
            alpha.len(),
            f.grid.dim
        )));
    }
    let order: usize = alpha.iter().sum();
    if order > MAX_DERIVATIVE_ORDER {
        return Err(Error::InvalidParameter(format!(
            "derivative order {order} exceeds {MAX_DERIVATIVE_ORDER}"
        )));
    }
    if order == 0 {
        return Ok(Flagged::clean(f.clone()));
    }
    let mut hat = forward_ft(f)?;
    let mut flags = Vec::new();
    if top_octave_fraction(&hat) > DEFAULT_RESOLUTION_THRESHOLD {
        flags.push(Flag::UnderResolved);
    }
    let comps = f.fiber.components();
    let grid = f.grid;
    for (n, chunk) in hat.values.chunks_mut(comps).enumerate() {
        let s = derivative_symbol(&grid, n, alpha);
        chunk.iter_mut().for_each(|z| *z *= s);
    }
    Ok(Flagged {
        value: inverse_ft(&hat)?,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: Grid) -> SampledFunction {
        SampledFunction::scalar(grid, |x| (-x.iter().map(|v| v * v).sum::<f64>() / 2.0).exp()).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(3, 1.0, 64).is_err());
        assert!(Grid::new(1, 1.0, 100).is_err());
        assert!(Grid::new(1, -1.0, 64).is_err());
    }

    #[test]
    fn spacing_identity() {
        let g = Grid::new(1, 7.5, 512).unwrap();
        assert!((g.dx() * g.dxi() * 512.0 - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn zero_transforms_to_zero() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let z = SampledFunction::zeros(g, Domain::Physical, Fiber::Vector(2));
        let hat = forward_ft(&z).unwrap();
        assert!(hat.values().iter().all(|v| *v == ZERO));
        let back = inverse_ft(&SampledFunction::zeros(g, Domain::Frequency, Fiber::Vector(1))).unwrap();
        assert!(back.values().iter().all(|v| *v == ZERO));
    }

    #[test]
    fn non_finite_input_rejected() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let mut v = vec![ZERO; 64];
        v[3] = C64::new(f64::NAN, 0.0);
        assert!(matches!(
            SampledFunction::from_values(g, Domain::Physical, Fiber::Vector(1), v),
            Err(Error::NonFinite { node: 3 })
        ));
    }

    #[test]
    fn domain_checked() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let f = gaussian(g);
        assert!(inverse_ft(&f).is_err());
        assert!(forward_ft(&forward_ft(&f).unwrap()).is_err());
    }

    #[test]
    fn real_even_input_gives_real_even_transform() {
        let g = Grid::new(1, 20.0, 1024).unwrap();
        let f = SampledFunction::scalar(g, |x| (-x[0] * x[0]).exp() * (1.0 + x[0] * x[0])).unwrap();
        let hat = forward_ft(&f).unwrap();
        let peak = hat.max_norm();
        for j in 0..g.points_per_axis() {
            let v = hat.node(j)[0];
            assert!(v.im.abs() <= 1e-12 * peak);
            let k = g.signed_index(j);
            if k != -(g.points_per_axis() as i64) / 2 {
                let mirror = hat.node(g.storage_index(-k))[0];
                assert!((v - mirror).norm() <= 1e-12 * peak);
            }
        }
    }

    #[test]
    fn second_derivative_of_sine() {
        let g = Grid::new(1, 16.0 * PI, 2048).unwrap();
        let f = SampledFunction::scalar(g, |x| x[0].sin()).unwrap();
        let d2 = spectral_derivative(&f, &[2]).unwrap().value;
        for j in 0..g.points_per_axis() {
            let x = g.x_axis(j);
            assert!((d2.node(j)[0].re + x.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_order_derivative_is_identity() {
        let g = Grid::new(1, 8.0, 128).unwrap();
        let f = gaussian(g);
        assert_eq!(spectral_derivative(&f, &[0]).unwrap().value, f);
    }

    #[test]
    fn derivative_order_limit() {
        let g = Grid::new(1, 8.0, 128).unwrap();
        assert!(spectral_derivative(&gaussian(g), &[7]).is_err());
    }

    #[test]
    fn under_resolved_flag() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let f = SampledFunction::scalar(g, |x| if x[0].abs() < 1.0 { 1.0 } else { 0.0 }).unwrap();
        let d = spectral_derivative(&f, &[1]).unwrap();
        assert!(d.flags.contains(&Flag::UnderResolved));
        let smooth = spectral_derivative(&gaussian(Grid::new(1, 16.0, 256).unwrap()), &[1]).unwrap();
        assert!(smooth.flags.is_empty());
    }

    #[test]
    fn two_dimensional_round_trip() {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let f = SampledFunction::from_fn(g, Domain::Physical, Fiber::Vector(2), |x, out| {
            let r2 = x[0] * x[0] + 2.0 * x[1] * x[1];
            out[0] = C64::new((-r2).exp(), 0.0);
            out[1] = C64::new(0.0, x[0] * (-r2).exp());
        })
        .unwrap();
        let back = inverse_ft(&forward_ft(&f).unwrap()).unwrap();
        let err = back.sub(&f).unwrap().l2_norm() / f.l2_norm();
        assert!(err < 1e-13);
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::new(2, 4.0, 8).unwrap();
        let f = SampledFunction::from_fn(g, Domain::Frequency, Fiber::Matrix(2), |x, out| {
            for (c, o) in out.iter_mut().enumerate() {
                *o = C64::new(x[0] + c as f64, x[1] - 0.25);
            }
        })
        .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k0,k1,xi0,xi1,re_0_0,im_0_0"));
        let back = SampledFunction::read_csv(&text, g, Domain::Frequency, Fiber::Matrix(2)).unwrap();
        assert_eq!(back, f);
    }
}
