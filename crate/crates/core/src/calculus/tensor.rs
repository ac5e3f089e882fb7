//! Dense tensors of rank ≤ 3 with per-slot variance, and the covariant
//! operations built on them.
//!
//! Components are stored row-major by slot: for rank 2, `data[i * 4 + j]` is
//! `T^{ij}` (or whichever variance the slots carry). A derivative slot is
//! always appended last, which matches the `c * 4 + k` layout produced by
//! [`DerivEngine::partials`].

use super::dual::Real;
use super::engine::{ad_value_and_partials, CoordFn, DerivEngine};
use crate::chart::{christoffel, christoffel_at, Chart, ChristoffelData};
use crate::error::{Error, Result};
use crate::linalg::Mat4;

pub const MAX_RANK: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Upper,
    Lower,
}

/// Index-variance signature of a tensor. Slots past `rank` are always `Upper`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Variance {
    rank: usize,
    slots: [Slot; MAX_RANK],
}

impl Variance {
    pub fn new(slots: &[Slot]) -> Result<Self> {
        if slots.len() > MAX_RANK {
            return Err(Error::Rank {
                rank: slots.len(),
                max: MAX_RANK,
            });
        }
        let mut s = [Slot::Upper; MAX_RANK];
        s[..slots.len()].copy_from_slice(slots);
        Ok(Variance {
            rank: slots.len(),
            slots: s,
        })
    }

    pub const fn scalar() -> Self {
        Variance {
            rank: 0,
            slots: [Slot::Upper; MAX_RANK],
        }
    }

    pub const fn vector() -> Self {
        Variance {
            rank: 1,
            slots: [Slot::Upper; MAX_RANK],
        }
    }

    pub const fn covector() -> Self {
        Variance {
            rank: 1,
            slots: [Slot::Lower, Slot::Upper, Slot::Upper],
        }
    }

    pub const fn upper2() -> Self {
        Variance {
            rank: 2,
            slots: [Slot::Upper; MAX_RANK],
        }
    }

    pub const fn lower2() -> Self {
        Variance {
            rank: 2,
            slots: [Slot::Lower, Slot::Lower, Slot::Upper],
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots[..self.rank]
    }

    pub fn slot(&self, i: usize) -> Slot {
        self.slots()[i]
    }

    pub fn len(&self) -> usize {
        4usize.pow(self.rank as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn with_slot(&self, i: usize, s: Slot) -> Self {
        let mut v = *self;
        v.slots[i] = s;
        v
    }

    /// Append a slot (the derivative index of a covariant derivative).
    pub fn push(&self, s: Slot) -> Result<Self> {
        let mut all = self.slots().to_vec();
        all.push(s);
        Variance::new(&all)
    }

    fn remove_two(&self, a: usize, b: usize) -> Self {
        let kept: Vec<Slot> = self
            .slots()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != a && *i != b)
            .map(|(_, s)| *s)
            .collect();
        Variance::new(&kept).expect("rank only shrinks")
    }

    fn stride(&self, slot: usize) -> usize {
        4usize.pow((self.rank - 1 - slot) as u32)
    }
}

/// Components of a tensor at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f64> {
    variance: Variance,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(variance: Variance, data: Vec<T>) -> Result<Self> {
        if data.len() != variance.len() {
            return Err(Error::Rank {
                rank: variance.rank(),
                max: MAX_RANK,
            });
        }
        Ok(Tensor { variance, data })
    }

    pub fn zeros(variance: Variance) -> Self {
        Tensor {
            variance,
            data: vec![T::zero(); variance.len()],
        }
    }

    pub fn scalar(x: T) -> Self {
        Tensor {
            variance: Variance::scalar(),
            data: vec![x],
        }
    }

    pub fn from_vector(v: [T; 4], slot: Slot) -> Self {
        let variance = if slot == Slot::Upper {
            Variance::vector()
        } else {
            Variance::covector()
        };
        Tensor {
            variance,
            data: v.to_vec(),
        }
    }

    pub fn from_matrix(m: &Mat4<T>, variance: Variance) -> Self {
        assert_eq!(variance.rank(), 2);
        Tensor {
            variance,
            data: m.iter().flatten().copied().collect(),
        }
    }

    pub fn variance(&self) -> Variance {
        self.variance
    }

    pub fn rank(&self) -> usize {
        self.variance.rank()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> T {
        assert_eq!(idx.len(), self.rank());
        self.data[flat_index(idx)]
    }

    pub fn as_vector(&self) -> [T; 4] {
        assert_eq!(self.rank(), 1);
        std::array::from_fn(|i| self.data[i])
    }

    pub fn as_matrix(&self) -> Mat4<T> {
        assert_eq!(self.rank(), 2);
        std::array::from_fn(|i| std::array::from_fn(|j| self.data[i * 4 + j]))
    }
}

fn flat_index(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, i| acc * 4 + i)
}

/// Contract one slot of `data` with a 4×4 matrix `m[new][old]`.
fn transform_slot<T: Real>(variance: &Variance, data: &[T], slot: usize, m: &Mat4<T>) -> Vec<T> {
    let stride = variance.stride(slot);
    let mut out = vec![T::zero(); data.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let i = (flat / stride) % 4;
        let base = flat - i * stride;
        let mut s = T::zero();
        for (a, m_ia) in m[i].iter().enumerate() {
            s += *m_ia * data[base + a * stride];
        }
        *o = s;
    }
    out
}

/// Raise `slot` with the inverse metric `g^{μν}`.
pub fn raise_index<T: Real>(t: &Tensor<T>, slot: usize, g_inv: &Mat4<T>) -> Result<Tensor<T>> {
    if slot >= t.rank() || t.variance.slot(slot) != Slot::Lower {
        return Err(Error::Variance { slot });
    }
    Ok(Tensor {
        variance: t.variance.with_slot(slot, Slot::Upper),
        data: transform_slot(&t.variance, &t.data, slot, g_inv),
    })
}

/// Lower `slot` with the metric `g_{μν}`.
pub fn lower_index<T: Real>(t: &Tensor<T>, slot: usize, g: &Mat4<T>) -> Result<Tensor<T>> {
    if slot >= t.rank() || t.variance.slot(slot) != Slot::Upper {
        return Err(Error::Variance { slot });
    }
    Ok(Tensor {
        variance: t.variance.with_slot(slot, Slot::Lower),
        data: transform_slot(&t.variance, &t.data, slot, g),
    })
}

/// Sum over a pair of slots with opposite variance.
pub fn contract<T: Real>(t: &Tensor<T>, slot_a: usize, slot_b: usize) -> Result<Tensor<T>> {
    let r = t.rank();
    if slot_a >= r || slot_b >= r || slot_a == slot_b {
        return Err(Error::Variance {
            slot: slot_a.max(slot_b),
        });
    }
    if t.variance.slot(slot_a) == t.variance.slot(slot_b) {
        return Err(Error::Variance { slot: slot_b });
    }
    let variance = t.variance.remove_two(slot_a, slot_b);
    let (sa, sb) = (t.variance.stride(slot_a), t.variance.stride(slot_b));
    let mut data = vec![T::zero(); variance.len()];
    let mut idx = vec![0usize; r];
    for (flat, out) in data.iter_mut().enumerate() {
        // scatter the remaining indices into the full index, skipping a and b
        let mut rem = flat;
        for pos in (0..r).rev() {
            if pos == slot_a || pos == slot_b {
                continue;
            }
            idx[pos] = rem % 4;
            rem /= 4;
        }
        idx[slot_a] = 0;
        idx[slot_b] = 0;
        let base = flat_index(&idx);
        let mut s = T::zero();
        for k in 0..4 {
            s += t.data[base + k * (sa + sb)];
        }
        *out = s;
    }
    Ok(Tensor { variance, data })
}

/// A tensor-valued function of chart coordinates.
pub trait TensorField: CoordFn {
    fn variance(&self) -> Variance;
}

/// Add connection terms to raw partials.
///
/// `value` has the field's variance, `partials` the `c * 4 + σ` layout. Each
/// upper slot contributes `+Γ^i_{ασ} T^{..α..}`, each lower slot
/// `−Γ^α_{iσ} T_{..α..}`.
pub fn apply_connection<T: Real>(
    variance: &Variance,
    value: &[T],
    partials: &[T],
    gamma: &ChristoffelData<T>,
) -> Vec<T> {
    let r = variance.rank();
    let mut out = partials.to_vec();
    for c in 0..value.len() {
        for s in 0..r {
            let stride = variance.stride(s);
            let i = (c / stride) % 4;
            let base = c - i * stride;
            for sigma in 0..4 {
                let mut acc = T::zero();
                match variance.slot(s) {
                    Slot::Upper => {
                        for a in 0..4 {
                            acc += gamma.get(i, a, sigma) * value[base + a * stride];
                        }
                    }
                    Slot::Lower => {
                        for a in 0..4 {
                            acc -= gamma.get(a, i, sigma) * value[base + a * stride];
                        }
                    }
                }
                out[c * 4 + sigma] += acc;
            }
        }
    }
    out
}

/// Exact covariant derivative at any scalar depth (nested forward mode).
pub fn covariant_derivative_at<T: Real, F: TensorField>(field: &F, chart: &Chart, u: &[T; 4]) -> Vec<T> {
    let (value, partials) = ad_value_and_partials(field, u);
    let gamma = christoffel_at(chart, u);
    apply_connection(&field.variance(), &value, &partials, &gamma)
}

/// `∇_σ T` at `u`; the new slot is lower and appended last.
pub fn covariant_derivative<F: TensorField>(
    field: &F,
    chart: &Chart,
    u: &[f64; 4],
    engine: &DerivEngine,
) -> Result<Tensor> {
    let variance = field.variance();
    if variance.rank() > 2 {
        return Err(Error::Rank {
            rank: variance.rank(),
            max: 2,
        });
    }
    engine.require_order(2)?;
    chart.check_domain(u)?;
    let partials = engine.partials(field, u)?;
    let value = field.eval(u);
    let gamma = christoffel(chart, u, engine)?;
    Ok(Tensor {
        variance: variance.push(Slot::Lower)?,
        data: apply_connection(&variance, &value, &partials, &gamma),
    })
}

fn check_divergence_variance(v: &Variance) -> Result<()> {
    match v.rank() {
        1 | 2 if v.slot(v.rank() - 1) == Slot::Upper => Ok(()),
        1 | 2 => Err(Error::Variance { slot: v.rank() - 1 }),
        r => Err(Error::Rank { rank: r, max: 2 }),
    }
}

/// Divergence on the last (upper) slot, exact at any scalar depth.
pub fn divergence_at<T: Real, F: TensorField>(field: &F, chart: &Chart, u: &[T; 4]) -> Vec<T> {
    let variance = field.variance();
    let cov = Tensor {
        variance: variance.push(Slot::Lower).expect("rank <= 2"),
        data: covariant_derivative_at(field, chart, u),
    };
    let r = variance.rank();
    contract(&cov, r - 1, r)
        .expect("last slot is upper, derivative slot lower")
        .into_data()
}

/// Divergence on the last (upper) slot: `T^{..ν}_{;ν}`.
///
/// Rank-1 input gives one component, rank-2 upper-upper input gives four.
pub fn divergence<F: TensorField>(
    field: &F,
    chart: &Chart,
    u: &[f64; 4],
    engine: &DerivEngine,
) -> Result<Vec<f64>> {
    let variance = field.variance();
    check_divergence_variance(&variance)?;
    let cov = covariant_derivative(field, chart, u, engine)?;
    let r = variance.rank();
    Ok(contract(&cov, r - 1, r)?.into_data())
}
