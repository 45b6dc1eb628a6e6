//! Invertible ergodic base systems: irrational rotations, two-sided Bernoulli
//! shifts and finite periodic orbits (the latter only as exact oracles).
//!
//! Rotation angles are stored as 64-bit fixed-point fractions of the circle,
//! so iterating the base is exact integer arithmetic and the group law
//! `σ^a σ^b = σ^(a+b)` holds bit for bit. Bernoulli sequences are never
//! materialised: the symbol at absolute index `i` of the sequence labelled
//! `seed` is a hash of `(seed, i)` pushed through the inverse CDF of the
//! probability vector, so shifting in either direction is just moving a
//! cursor.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Default rotation number, the golden-mean conjugate (√5 − 1)/2.
pub const GOLDEN_GAMMA: f64 = 0.618_033_988_749_894_8;

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// Convert an angle in turns to the fixed-point representation (reduced mod 1).
pub fn angle_to_fixed(theta: f64) -> u64 {
    let frac = theta - theta.floor();
    let scaled = frac * TWO_POW_64;
    if scaled >= TWO_POW_64 {
        0
    } else {
        scaled as u64
    }
}

/// Convert a fixed-point angle back to turns in `[0, 1)`.
pub fn fixed_to_angle(fixed: u64) -> f64 {
    (fixed >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// SplitMix64 finaliser.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// A point ω of the base.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasePoint {
    /// Angle as a fraction of 2^64 of a full turn.
    Rotation { angle: u64 },
    /// Sequence label and the absolute index of coordinate zero.
    Bernoulli { seed: u64, cursor: i64 },
    /// State index in `0..period`.
    Periodic { state: usize },
}

impl BasePoint {
    pub fn rotation(theta: f64) -> Self {
        BasePoint::Rotation {
            angle: angle_to_fixed(theta),
        }
    }

    pub fn bernoulli(seed: u64) -> Self {
        BasePoint::Bernoulli { seed, cursor: 0 }
    }

    pub fn periodic(state: usize) -> Self {
        BasePoint::Periodic { state }
    }

    /// Rotation angle in turns, if this is a rotation point.
    pub fn angle(&self) -> Option<f64> {
        match self {
            BasePoint::Rotation { angle } => Some(fixed_to_angle(*angle)),
            _ => None,
        }
    }
}

impl fmt::Display for BasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasePoint::Rotation { angle } => write!(f, "θ={:.12}", fixed_to_angle(*angle)),
            BasePoint::Bernoulli { seed, cursor } => write!(f, "seq#{seed:016x}@{cursor}"),
            BasePoint::Periodic { state } => write!(f, "state {state}"),
        }
    }
}

/// The invertible base map σ together with its invariant measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BaseSystem {
    /// θ ↦ θ + γ mod 1, with γ stored in fixed point.
    Rotation { increment: u64 },
    /// Two-sided shift on i.i.d. symbols; `stride` > 1 encodes powers of σ.
    Bernoulli {
        probabilities: Vec<f64>,
        stride: i64,
    },
    /// k ↦ k + stride mod p. Never aperiodic; used for exact oracles.
    Periodic { period: usize, stride: usize },
}

impl BaseSystem {
    /// Rotation by `gamma` turns.
    pub fn rotation(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(LabError::InvalidParameter(
                "rotation number must be finite".into(),
            ));
        }
        let increment = angle_to_fixed(gamma);
        if increment == 0 {
            return Err(LabError::InvalidParameter(
                "rotation number must not be an integer".into(),
            ));
        }
        Ok(BaseSystem::Rotation { increment })
    }

    /// Rotation by the golden-mean conjugate.
    pub fn golden_rotation() -> Self {
        BaseSystem::Rotation {
            increment: angle_to_fixed(GOLDEN_GAMMA),
        }
    }

    /// Two-sided Bernoulli shift with the given symbol probabilities.
    pub fn bernoulli(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() < 2 {
            return Err(LabError::InvalidParameter(
                "Bernoulli shift needs at least two symbols".into(),
            ));
        }
        if probabilities.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(LabError::InvalidParameter(
                "symbol probabilities must be positive".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LabError::InvalidParameter(format!(
                "symbol probabilities sum to {total}, expected 1"
            )));
        }
        Ok(BaseSystem::Bernoulli {
            probabilities,
            stride: 1,
        })
    }

    /// Finite cyclic permutation of `period` states.
    pub fn periodic(period: usize) -> Result<Self> {
        if period == 0 {
            return Err(LabError::InvalidParameter("period must be positive".into()));
        }
        Ok(BaseSystem::Periodic { period, stride: 1 })
    }

    pub fn is_aperiodic(&self) -> bool {
        !matches!(self, BaseSystem::Periodic { .. })
    }

    pub fn descriptor(&self) -> String {
        match self {
            BaseSystem::Rotation { increment } => {
                format!("rotation(gamma={:.15})", fixed_to_angle(*increment))
            }
            BaseSystem::Bernoulli {
                probabilities,
                stride,
            } => {
                if *stride == 1 {
                    format!("bernoulli({probabilities:?})")
                } else {
                    format!("bernoulli({probabilities:?})^{stride}")
                }
            }
            BaseSystem::Periodic { period, stride } => {
                if *stride == 1 {
                    format!("periodic(p={period})")
                } else {
                    format!("periodic(p={period})^{stride}")
                }
            }
        }
    }

    /// The base system generated by σ^k.
    pub fn power(&self, k: i64) -> Result<Self> {
        if k <= 0 {
            return Err(LabError::InvalidParameter("power must be positive".into()));
        }
        Ok(match self {
            BaseSystem::Rotation { increment } => BaseSystem::Rotation {
                increment: increment.wrapping_mul(k as u64),
            },
            BaseSystem::Bernoulli {
                probabilities,
                stride,
            } => BaseSystem::Bernoulli {
                probabilities: probabilities.clone(),
                stride: stride * k,
            },
            BaseSystem::Periodic { period, stride } => BaseSystem::Periodic {
                period: *period,
                stride: (stride * k as usize) % period,
            },
        })
    }

    /// σ^k ω for any signed `k`.
    pub fn step(&self, omega: &BasePoint, k: i64) -> BasePoint {
        match (self, omega) {
            (BaseSystem::Rotation { increment }, BasePoint::Rotation { angle }) => {
                BasePoint::Rotation {
                    angle: angle.wrapping_add(increment.wrapping_mul(k as u64)),
                }
            }
            (BaseSystem::Bernoulli { stride, .. }, BasePoint::Bernoulli { seed, cursor }) => {
                BasePoint::Bernoulli {
                    seed: *seed,
                    cursor: cursor + stride * k,
                }
            }
            (BaseSystem::Periodic { period, stride }, BasePoint::Periodic { state }) => {
                let p = *period as i128;
                let shift = (*stride as i128 * k as i128).rem_euclid(p);
                BasePoint::Periodic {
                    state: ((*state as i128 + shift) % p) as usize,
                }
            }
            _ => panic!(
                "base point {omega} does not belong to {}",
                self.descriptor()
            ),
        }
    }

    /// Symbol of a Bernoulli point at coordinate `offset` (relative to its cursor).
    pub fn symbol(&self, omega: &BasePoint, offset: i64) -> usize {
        match (self, omega) {
            (
                BaseSystem::Bernoulli { probabilities, .. },
                BasePoint::Bernoulli { seed, cursor },
            ) => bernoulli_symbol(probabilities, *seed, cursor + offset),
            _ => panic!("symbol lookup requires a Bernoulli point"),
        }
    }

    /// Number of distinct labels produced by [`BaseSystem::label`].
    pub fn alphabet_size(&self) -> usize {
        match self {
            BaseSystem::Rotation { .. } => usize::MAX,
            BaseSystem::Bernoulli { probabilities, .. } => probabilities.len(),
            BaseSystem::Periodic { period, .. } => *period,
        }
    }

    /// A discrete label in `0..n` used to key generator tables: the current
    /// symbol, the state index, or the rotation angle binned into `n` arcs.
    pub fn label(&self, omega: &BasePoint, n: usize) -> usize {
        assert!(n > 0);
        match omega {
            BasePoint::Rotation { angle } => ((*angle as u128 * n as u128) >> 64) as usize,
            BasePoint::Bernoulli { .. } => self.symbol(omega, 0) % n,
            BasePoint::Periodic { state } => state % n,
        }
    }

    /// A phase in `[0, 1)`: the angle, `state/period`, or `symbol/alphabet`.
    pub fn phase(&self, omega: &BasePoint) -> f64 {
        match (self, omega) {
            (_, BasePoint::Rotation { angle }) => fixed_to_angle(*angle),
            (BaseSystem::Periodic { period, .. }, BasePoint::Periodic { state }) => {
                *state as f64 / *period as f64
            }
            (BaseSystem::Bernoulli { probabilities, .. }, BasePoint::Bernoulli { .. }) => {
                self.symbol(omega, 0) as f64 / probabilities.len() as f64
            }
            _ => panic!(
                "base point {omega} does not belong to {}",
                self.descriptor()
            ),
        }
    }

    /// Draw a point distributed according to the invariant measure.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> BasePoint {
        match self {
            BaseSystem::Rotation { .. } => BasePoint::Rotation {
                angle: rng.random(),
            },
            BaseSystem::Bernoulli { .. } => BasePoint::Bernoulli {
                seed: rng.random(),
                cursor: 0,
            },
            BaseSystem::Periodic { period, .. } => BasePoint::Periodic {
                state: rng.random_range(0..*period),
            },
        }
    }

    pub fn sample_points<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<BasePoint> {
        (0..count).map(|_| self.sample_point(rng)).collect()
    }

    /// The `n` consecutive points ω, σω, …, σ^(n−1)ω.
    pub fn orbit(&self, omega: &BasePoint, start: i64, len: usize) -> Vec<BasePoint> {
        let mut out = Vec::with_capacity(len);
        let mut p = self.step(omega, start);
        for _ in 0..len {
            out.push(p);
            p = self.step(&p, 1);
        }
        out
    }
}

fn bernoulli_symbol(probabilities: &[f64], seed: u64, index: i64) -> usize {
    let u = unit_from_bits(mix64(seed ^ mix64(index as u64 ^ 0xA076_1D64_78BD_642F)));
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probabilities.len() - 1
}

type PointFn = dyn Fn(&BaseSystem, &BasePoint) -> f64 + Send + Sync;
type PointPredicate = dyn Fn(&BaseSystem, &BasePoint) -> bool + Send + Sync;

/// A real observable φ on the base.
#[derive(Clone)]
pub struct Observable {
    name: String,
    mean: Option<f64>,
    eval: Arc<PointFn>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("mean", &self.mean)
            .finish()
    }
}

impl Observable {
    pub fn new<F>(name: impl Into<String>, mean: Option<f64>, eval: F) -> Self
    where
        F: Fn(&BaseSystem, &BasePoint) -> f64 + Send + Sync + 'static,
    {
        Observable {
            name: name.into(),
            mean,
            eval: Arc::new(eval),
        }
    }

    pub fn constant(c: f64) -> Self {
        Observable::new(format!("const({c})"), Some(c), move |_, _| c)
    }

    /// cos(2π·phase); zero mean over a rotation.
    pub fn cosine() -> Self {
        Observable::new("cos(2πθ)", Some(0.0), |base, p| {
            (std::f64::consts::TAU * base.phase(p)).cos()
        })
    }

    /// 1{symbol at 0 = s} − P(s) on a Bernoulli base; zero mean.
    pub fn centered_symbol(symbol: usize, probability: f64) -> Self {
        Observable::new(
            format!("1[s0={symbol}]-{probability}"),
            Some(0.0),
            move |base, p| {
                let hit = if base.symbol(p, 0) == symbol {
                    1.0
                } else {
                    0.0
                };
                hit - probability
            },
        )
    }

    /// Re-declare the mean (used to plant falsely declared means in tests).
    pub fn with_declared_mean(mut self, mean: Option<f64>) -> Self {
        self.mean = mean;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn declared_mean(&self) -> Option<f64> {
        self.mean
    }

    pub fn eval(&self, base: &BaseSystem, omega: &BasePoint) -> f64 {
        (self.eval)(base, omega)
    }
}

/// S_n φ(ω) = Σ_{k<n} φ(σ^k ω), accumulated with Neumaier compensation.
pub fn birkhoff_sum(base: &BaseSystem, phi: &Observable, omega: &BasePoint, n: usize) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut p = *omega;
    for _ in 0..n {
        let x = phi.eval(base, &p);
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
        p = base.step(&p, 1);
    }
    sum + comp
}

/// Structural description of a measurable set F ⊂ Ω.
#[derive(Clone)]
pub enum RegionKind {
    Everything,
    /// Half-open arc [lo, hi) of a rotation, in fixed point; wraps if lo > hi.
    Arc {
        lo: u64,
        hi: u64,
    },
    /// Bernoulli cylinder: prescribed symbols at offsets relative to the cursor.
    Cylinder(Vec<(i64, usize)>),
    /// Explicit states of a periodic base.
    States(Vec<usize>),
    Predicate(Arc<PointPredicate>),
    Intersection(Vec<Region>),
    /// Points of `set` whose first return to `set` takes more than `steps` steps.
    NoReturnWithin {
        set: Box<Region>,
        steps: usize,
    },
}

/// A set indicator with a human-readable label.
#[derive(Clone)]
pub struct Region {
    kind: RegionKind,
    label: String,
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Region({})", self.label)
    }
}

impl Region {
    pub fn everything() -> Self {
        Region {
            kind: RegionKind::Everything,
            label: "Ω".into(),
        }
    }

    /// Arc [lo, hi) in turns.
    pub fn arc(lo: f64, hi: f64) -> Self {
        let lo_f = angle_to_fixed(lo);
        let hi_f = if hi >= 1.0 && lo <= 0.0 {
            return Region::everything();
        } else {
            angle_to_fixed(hi)
        };
        Region {
            kind: RegionKind::Arc { lo: lo_f, hi: hi_f },
            label: format!("[{lo}, {hi})"),
        }
    }

    pub fn cylinder(symbols: Vec<(i64, usize)>) -> Self {
        let label = format!(
            "cyl[{}]",
            symbols
                .iter()
                .map(|(i, s)| format!("{i}:{s}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        Region {
            kind: RegionKind::Cylinder(symbols),
            label,
        }
    }

    pub fn states(states: Vec<usize>) -> Self {
        let label = format!("states{states:?}");
        Region {
            kind: RegionKind::States(states),
            label,
        }
    }

    pub fn predicate<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&BaseSystem, &BasePoint) -> bool + Send + Sync + 'static,
    {
        Region {
            kind: RegionKind::Predicate(Arc::new(f)),
            label: label.into(),
        }
    }

    pub fn intersect(self, other: Region) -> Self {
        let label = format!("{} ∩ {}", self.label, other.label);
        let mut parts = Vec::new();
        for r in [self, other] {
            match r.kind {
                RegionKind::Intersection(inner) => parts.extend(inner),
                RegionKind::Everything => {}
                _ => parts.push(r),
            }
        }
        if parts.is_empty() {
            return Region::everything();
        }
        if parts.len() == 1 {
            return parts.pop().unwrap();
        }
        Region {
            kind: RegionKind::Intersection(parts),
            label,
        }
    }

    /// {ω ∈ self : τ_self(ω) > steps}.
    pub fn no_return_within(self, steps: usize) -> Self {
        let label = format!("{{ω ∈ {} : τ > {steps}}}", self.label);
        Region {
            kind: RegionKind::NoReturnWithin {
                set: Box::new(self),
                steps,
            },
            label,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &RegionKind {
        &self.kind
    }

    pub fn contains(&self, base: &BaseSystem, omega: &BasePoint) -> bool {
        match &self.kind {
            RegionKind::Everything => true,
            RegionKind::Arc { lo, hi } => match omega {
                BasePoint::Rotation { angle } => angle.wrapping_sub(*lo) < hi.wrapping_sub(*lo),
                _ => panic!("arc regions apply to rotation points only"),
            },
            RegionKind::Cylinder(symbols) => {
                symbols.iter().all(|&(i, s)| base.symbol(omega, i) == s)
            }
            RegionKind::States(states) => match omega {
                BasePoint::Periodic { state } => states.contains(state),
                _ => panic!("state regions apply to periodic points only"),
            },
            RegionKind::Predicate(f) => f(base, omega),
            RegionKind::Intersection(parts) => parts.iter().all(|r| r.contains(base, omega)),
            RegionKind::NoReturnWithin { set, steps } => {
                if !set.contains(base, omega) {
                    return false;
                }
                let mut p = *omega;
                for _ in 0..*steps {
                    p = base.step(&p, 1);
                    if set.contains(base, &p) {
                        return false;
                    }
                }
                true
            }
        }
    }

    /// Monte Carlo estimate of ℙ(self) over the given sample points.
    pub fn empirical_measure(&self, base: &BaseSystem, samples: &[BasePoint]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let hits = samples.iter().filter(|p| self.contains(base, p)).count();
        hits as f64 / samples.len() as f64
    }
}

/// Successive visit times 0 = τ_F(ω,0) < τ_F(ω,1) < … < τ_F(ω,count).
pub fn return_times(
    base: &BaseSystem,
    set: &Region,
    omega: &BasePoint,
    count: usize,
    horizon: usize,
) -> Result<Vec<usize>> {
    if !set.contains(base, omega) {
        return Err(LabError::PointOutsideSet(set.label().to_string()));
    }
    let mut times = Vec::with_capacity(count + 1);
    times.push(0);
    let mut p = *omega;
    for t in 1..=horizon {
        if times.len() > count {
            break;
        }
        p = base.step(&p, 1);
        if set.contains(base, &p) {
            times.push(t);
        }
    }
    if times.len() <= count {
        return Err(LabError::HorizonExhausted {
            wanted: count,
            found: times.len() - 1,
            horizon,
        });
    }
    Ok(times)
}

/// Base of a Rokhlin tower of height `height + 1` inside a set F.
#[derive(Clone, Debug)]
pub struct RokhlinTower {
    /// B, the tower base; σ^n B for 0 ≤ n ≤ height + 1 are pairwise disjoint.
    pub base_set: Region,
    pub height: usize,
    /// Small set intersected with F to make long returns likely, if needed.
    pub refinement: Option<Region>,
    pub measure_estimate: f64,
    /// Sample points that landed in B.
    pub hits: Vec<BasePoint>,
    pub samples: usize,
}

impl RokhlinTower {
    /// Checks σ^k ω ∉ B for 1 ≤ k ≤ height + 1.
    pub fn is_disjoint_at(&self, base: &BaseSystem, omega: &BasePoint) -> bool {
        let mut p = *omega;
        for _ in 0..=self.height {
            p = base.step(&p, 1);
            if self.base_set.contains(base, &p) {
                return false;
            }
        }
        true
    }
}

/// Construct B ⊂ F with σ^n B (0 ≤ n ≤ N+1) pairwise disjoint and positive
/// empirical measure.
///
/// B = {ω ∈ F′ : τ_{F′}(ω) > N+1}. F′ = F is tried first; if no sample lands
/// in B, F is intersected with an arc or cylinder of measure at most
/// 1/(2(N+2)) around a sampled point of F.
pub fn rokhlin_base<R: Rng + ?Sized>(
    base: &BaseSystem,
    set: &Region,
    height: usize,
    samples: usize,
    rng: &mut R,
) -> Result<RokhlinTower> {
    if !base.is_aperiodic() {
        return Err(LabError::NonAperiodicBase(base.descriptor()));
    }
    if samples == 0 {
        return Err(LabError::InvalidParameter(
            "samples must be positive".into(),
        ));
    }
    let points = base.sample_points(rng, samples);
    let in_set: Vec<BasePoint> = points
        .iter()
        .filter(|p| set.contains(base, p))
        .copied()
        .collect();
    if in_set.is_empty() {
        return Err(LabError::EmptyTower(format!(
            "{} has zero empirical measure",
            set.label()
        )));
    }

    let try_build = |refined: Region, refinement: Option<Region>| -> Option<RokhlinTower> {
        let b = refined.no_return_within(height + 1);
        let hits: Vec<BasePoint> = points
            .iter()
            .filter(|p| b.contains(base, p))
            .copied()
            .collect();
        if hits.is_empty() {
            return None;
        }
        Some(RokhlinTower {
            measure_estimate: hits.len() as f64 / samples as f64,
            base_set: b,
            height,
            refinement,
            hits,
            samples,
        })
    };

    if let Some(t) = try_build(set.clone(), None) {
        return Ok(t);
    }

    let target = 1.0 / (2.0 * (height as f64 + 2.0));
    for anchor in in_set.iter().take(16) {
        let small = small_set_around(base, anchor, target);
        if let Some(t) = try_build(small.clone().intersect(set.clone()), Some(small)) {
            return Ok(t);
        }
    }
    Err(LabError::EmptyTower(format!(
        "no sampled point of {} has first return beyond {}",
        set.label(),
        height + 1
    )))
}

/// Arc or cylinder containing `anchor` with measure at most `target`.
fn small_set_around(base: &BaseSystem, anchor: &BasePoint, target: f64) -> Region {
    match (base, anchor) {
        (BaseSystem::Rotation { .. }, BasePoint::Rotation { angle }) => {
            let width = angle_to_fixed(target);
            Region {
                kind: RegionKind::Arc {
                    lo: *angle,
                    hi: angle.wrapping_add(width),
                },
                label: format!("arc({:.6}, +{target:.4})", fixed_to_angle(*angle)),
            }
        }
        (BaseSystem::Bernoulli { probabilities, .. }, BasePoint::Bernoulli { .. }) => {
            let mut mass = 1.0;
            let mut word = Vec::new();
            let mut i = 0;
            while mass > target {
                let s = base.symbol(anchor, i);
                mass *= probabilities[s];
                word.push((i, s));
                i += 1;
            }
            Region::cylinder(word)
        }
        _ => panic!("no refinement for {}", base.descriptor()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rotation_step_is_addition_mod_one() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.5);
        let q = base.step(&p, 1);
        let expected = 0.5 + GOLDEN_GAMMA - 1.0;
        assert!((q.angle().unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_step_is_identity() {
        let rng = &mut ChaCha8Rng::seed_from_u64(1);
        for base in [
            BaseSystem::golden_rotation(),
            BaseSystem::bernoulli(vec![0.3, 0.7]).unwrap(),
            BaseSystem::periodic(5).unwrap(),
        ] {
            let p = base.sample_point(rng);
            assert_eq!(base.step(&p, 0), p);
        }
    }

    #[test]
    fn periodic_inverse_wraps() {
        let base = BaseSystem::periodic(4).unwrap();
        assert_eq!(
            base.step(&BasePoint::periodic(0), -1),
            BasePoint::periodic(3)
        );
    }

    #[test]
    fn bernoulli_symbols_are_stable_under_shifts() {
        let base = BaseSystem::bernoulli(vec![0.25, 0.25, 0.5]).unwrap();
        let p = BasePoint::bernoulli(77);
        let q = base.step(&p, 5);
        for j in -10..10 {
            assert_eq!(base.symbol(&q, j), base.symbol(&p, j + 5));
        }
        let back = base.step(&q, -5);
        assert_eq!(back, p);
    }

    #[test]
    fn bernoulli_symbol_frequencies_match() {
        let base = BaseSystem::bernoulli(vec![0.2, 0.8]).unwrap();
        let p = BasePoint::bernoulli(9);
        let ones = (0..100_000).filter(|&i| base.symbol(&p, i) == 1).count();
        assert!((ones as f64 / 1e5 - 0.8).abs() < 0.01);
    }

    #[test]
    fn probability_vector_is_validated() {
        assert!(BaseSystem::bernoulli(vec![0.5, 0.6]).is_err());
        assert!(BaseSystem::bernoulli(vec![1.0]).is_err());
        assert!(BaseSystem::bernoulli(vec![0.0, 1.0]).is_err());
        assert!(BaseSystem::periodic(0).is_err());
        assert!(BaseSystem::rotation(2.0).is_err());
    }

    #[test]
    fn aperiodicity_flags() {
        assert!(BaseSystem::golden_rotation().is_aperiodic());
        assert!(BaseSystem::bernoulli(vec![0.5, 0.5])
            .unwrap()
            .is_aperiodic());
        assert!(!BaseSystem::periodic(3).unwrap().is_aperiodic());
    }

    #[test]
    fn birkhoff_sums_of_constants() {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(0.3);
        assert_eq!(birkhoff_sum(&base, &Observable::constant(0.0), &p, 50), 0.0);
        assert_eq!(birkhoff_sum(&base, &Observable::constant(1.0), &p, 7), 7.0);
        assert_eq!(birkhoff_sum(&base, &Observable::constant(1.0), &p, 0), 0.0);
    }

    #[test]
    fn return_times_for_whole_space() {
        let base = BaseSystem::golden_rotation();
        let t = return_times(
            &base,
            &Region::everything(),
            &BasePoint::rotation(0.1),
            5,
            10,
        )
        .unwrap();
        assert_eq!(t, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn return_times_periodic() {
        let base = BaseSystem::periodic(4).unwrap();
        let t = return_times(
            &base,
            &Region::states(vec![0]),
            &BasePoint::periodic(0),
            2,
            100,
        )
        .unwrap();
        assert_eq!(t, vec![0, 4, 8]);
    }

    #[test]
    fn return_times_respect_horizon() {
        let base = BaseSystem::periodic(4).unwrap();
        let err = return_times(
            &base,
            &Region::states(vec![0]),
            &BasePoint::periodic(0),
            3,
            10,
        )
        .unwrap_err();
        assert_eq!(err.name(), "HorizonExhausted");
        let err = return_times(
            &base,
            &Region::states(vec![0]),
            &BasePoint::periodic(1),
            1,
            10,
        )
        .unwrap_err();
        assert_eq!(err.name(), "PointOutsideSet");
    }

    #[test]
    fn arc_membership_wraps() {
        let base = BaseSystem::golden_rotation();
        let r = Region::arc(0.9, 0.1);
        assert!(r.contains(&base, &BasePoint::rotation(0.95)));
        assert!(r.contains(&base, &BasePoint::rotation(0.05)));
        assert!(!r.contains(&base, &BasePoint::rotation(0.5)));
    }

    #[test]
    fn rokhlin_rejects_periodic_base() {
        let base = BaseSystem::periodic(4).unwrap();
        let rng = &mut ChaCha8Rng::seed_from_u64(0);
        let err = rokhlin_base(&base, &Region::everything(), 2, 100, rng).unwrap_err();
        assert_eq!(err.name(), "NonAperiodicBase");
    }

    #[test]
    fn rokhlin_height_zero_uses_first_return() {
        let base = BaseSystem::bernoulli(vec![0.5, 0.5]).unwrap();
        let f = Region::cylinder(vec![(0, 0)]);
        let rng = &mut ChaCha8Rng::seed_from_u64(4);
        let tower = rokhlin_base(&base, &f, 0, 4000, rng).unwrap();
        assert!(tower.refinement.is_none());
        // {ω ∈ F : τ_F > 1} is the cylinder [0 at 0, 1 at 1], measure 1/4.
        assert!((tower.measure_estimate - 0.25).abs() < 0.03);
        for p in &tower.hits {
            assert_eq!(base.symbol(p, 0), 0);
            assert_eq!(base.symbol(p, 1), 1);
        }
    }
}
