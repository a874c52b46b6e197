//! Exhaustive entropy computations on small finite joints `P(X, Z¹..Zᵐ)`.
//!
//! Serves as a model-free reference for the partitioned bounds: the upper bound
//! `H(X|Z^s)` holds for any joint, while the cover lower bound additionally needs
//! the cover sets to be conditionally independent given `X`.

use crate::bounds::BoundsInterval;
use crate::error::{Error, Result};
use crate::partition::{LowerSelection, UpperSelection};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest supported `|X|`.
pub const MAX_X: usize = 16;
/// Largest supported number of joint observation tuples per `x`.
pub const MAX_Z_TUPLES: usize = 1 << 12;

/// Compensated (Kahan–Babuška) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::default();
        iter.into_iter().for_each(|v| k.add(v));
        k
    }
}

/// `−p ln p` with `0 ln 0 = 0`.
fn neg_plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

fn entropy_of(probs: impl IntoIterator<Item = f64>) -> f64 {
    probs.into_iter().map(neg_plogp).collect::<KahanSum>().value()
}

/// Probability table over `x ∈ 0..|X|` and observation tuples `(z¹..zᵐ)`.
///
/// Entry `x · Π|Zⁱ| + Σ_i zⁱ · stride_i` with component 0 varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    x_card: usize,
    z_cards: Vec<usize>,
    table: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(x_card: usize, z_cards: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        if x_card == 0 || x_card > MAX_X {
            return Err(Error::InvalidDistribution(format!("|X| = {x_card} outside 1..={MAX_X}")));
        }
        if z_cards.contains(&0) {
            return Err(Error::InvalidDistribution("observation component with no outcomes".into()));
        }
        let nz = z_cards
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c).filter(|&v| v <= MAX_Z_TUPLES))
            .ok_or_else(|| Error::InvalidDistribution(format!("more than {MAX_Z_TUPLES} observation tuples")))?;
        if table.len() != x_card * nz {
            return Err(Error::InvalidDistribution(format!(
                "table has {} entries, expected {}",
                table.len(),
                x_card * nz
            )));
        }
        if let Some(p) = table.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("invalid mass {p}")));
        }
        let total = table.iter().copied().collect::<KahanSum>().value();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("masses sum to {total}")));
        }
        Ok(Self { x_card, z_cards, table })
    }

    /// `P(x) Π_i P(zⁱ | x)`; `channels[i][x]` is the distribution of component `i` given `x`.
    pub fn from_channels(px: &[f64], channels: &[Vec<Vec<f64>>]) -> Result<Self> {
        let z_cards: Vec<usize> = channels.iter().map(|c| c.first().map_or(0, Vec::len)).collect();
        if channels.iter().any(|c| c.len() != px.len()) {
            return Err(Error::InvalidDistribution("channel rows must match |X|".into()));
        }
        let nz: usize = z_cards.iter().product();
        let mut table = vec![0.0; px.len() * nz];
        for (x, &p) in px.iter().enumerate() {
            for zi in 0..nz {
                let mut rest = zi;
                let mut v = p;
                for (i, &card) in z_cards.iter().enumerate() {
                    v *= channels[i][x][rest % card];
                    rest /= card;
                }
                table[x * nz + zi] = v;
            }
        }
        Self::new(px.len(), z_cards, table)
    }

    pub fn x_card(&self) -> usize {
        self.x_card
    }

    pub fn z_cards(&self) -> &[usize] {
        &self.z_cards
    }

    pub fn n_components(&self) -> usize {
        self.z_cards.len()
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    fn nz(&self) -> usize {
        self.z_cards.iter().product()
    }

    /// Joint `P(x, z^c)` over the listed components, laid out like the full table.
    pub fn marginal(&self, members: &[usize]) -> Result<Vec<f64>> {
        for (k, &c) in members.iter().enumerate() {
            if c >= self.n_components() || members[..k].contains(&c) {
                return Err(Error::InvalidCover(format!("component {c} invalid or repeated")));
            }
        }
        let nz = self.nz();
        let sub: usize = members.iter().map(|&c| self.z_cards[c]).product();
        let mut strides = vec![0usize; self.n_components()];
        let mut s = 1;
        for &c in members {
            strides[c] = s;
            s *= self.z_cards[c];
        }
        let mut out = vec![KahanSum::default(); self.x_card * sub];
        for x in 0..self.x_card {
            for zi in 0..nz {
                let mut rest = zi;
                let mut idx = 0;
                for (i, &card) in self.z_cards.iter().enumerate() {
                    idx += (rest % card) * strides[i];
                    rest /= card;
                }
                out[x * sub + idx].add(self.table[x * nz + zi]);
            }
        }
        Ok(out.iter().map(KahanSum::value).collect())
    }

    fn px(&self) -> Vec<f64> {
        let nz = self.nz();
        (0..self.x_card)
            .map(|x| self.table[x * nz..(x + 1) * nz].iter().copied().collect::<KahanSum>().value())
            .collect()
    }

    /// `H(X)`.
    pub fn entropy_x(&self) -> f64 {
        entropy_of(self.px())
    }

    /// `H(X | Z^c)` by direct enumeration of `−Σ p(x, z^c) ln p(x | z^c)`.
    pub fn cond_entropy(&self, members: &[usize]) -> Result<f64> {
        let mut count = 0;
        self.cond_entropy_counted(members, &mut count)
    }

    fn cond_entropy_counted(&self, members: &[usize], count: &mut usize) -> Result<f64> {
        let joint = self.marginal(members)?;
        let sub = joint.len() / self.x_card;
        let pz: Vec<f64> = (0..sub)
            .map(|z| (0..self.x_card).map(|x| joint[x * sub + z]).collect::<KahanSum>().value())
            .collect();
        let mut h = KahanSum::default();
        for x in 0..self.x_card {
            for z in 0..sub {
                *count += 1;
                let p = joint[x * sub + z];
                if p > 0.0 {
                    h.add(-p * (p / pz[z]).ln());
                }
            }
        }
        Ok(h.value())
    }

    /// `H(Z^c | X) + H(X) − H(Z^c)`, the observation-space form of `H(X | Z^c)`.
    pub fn cond_entropy_z_form(&self, members: &[usize]) -> Result<f64> {
        let joint = self.marginal(members)?;
        let sub = joint.len() / self.x_card;
        let pz = (0..sub).map(|z| (0..self.x_card).map(|x| joint[x * sub + z]).collect::<KahanSum>().value());
        let hz = entropy_of(pz);
        let hxz = entropy_of(joint.iter().copied());
        let hx = self.entropy_x();
        // H(Z|X) = H(X, Z) − H(X)
        Ok((hxz - hx) + hx - hz)
    }

    /// Largest deviation of `P(z | x)` from `Π_i P(z^{c_i} | x)` over a cover.
    pub fn independence_deviation(&self, cover: &[Vec<usize>]) -> Result<f64> {
        let all: Vec<usize> = cover.iter().flatten().copied().collect();
        let joint = self.marginal(&all)?;
        let parts = cover.iter().map(|c| self.marginal(c)).collect::<Result<Vec<_>>>()?;
        let sizes: Vec<usize> = cover.iter().map(|c| c.iter().map(|&i| self.z_cards[i]).product()).collect();
        let sub = joint.len() / self.x_card;
        let px = self.px();
        let mut worst: f64 = 0.0;
        for x in 0..self.x_card {
            if px[x] == 0.0 {
                continue;
            }
            for z in 0..sub {
                let mut rest = z;
                let mut prod = 1.0;
                for (part, &size) in parts.iter().zip(&sizes) {
                    prod *= part[x * size + rest % size] / px[x];
                    rest /= size;
                }
                worst = worst.max((joint[x * sub + z] / px[x] - prod).abs());
            }
        }
        Ok(worst)
    }
}

/// `H(X|Z)` by direct enumeration, cross-checked against `H(Z|X) + H(X) − H(Z)`.
pub fn cond_entropy_brute(joint: &DiscreteJoint) -> Result<f64> {
    let all: Vec<usize> = (0..joint.n_components()).collect();
    let direct = joint.cond_entropy(&all)?;
    let lemma = joint.cond_entropy_z_form(&all)?;
    if (direct - lemma).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!(
            "direct {direct} and observation-space {lemma} forms disagree"
        )));
    }
    Ok(direct)
}

/// `H(X | Z^s)`; valid as an upper bound for any joint.
pub fn upper_bound_brute(joint: &DiscreteJoint, upper: &UpperSelection) -> Result<f64> {
    joint.cond_entropy(&upper.members)
}

/// `Σ_i H(X|Z^{c_i}) − (p − 1) H(X)`, after checking conditional independence of the cover given `X`.
pub fn lower_bound_brute(joint: &DiscreteJoint, lower: &LowerSelection) -> Result<f64> {
    let nonempty: Vec<Vec<usize>> = lower.members.iter().filter(|m| !m.is_empty()).cloned().collect();
    let dev = joint.independence_deviation(&nonempty)?;
    if dev > 1e-10 {
        return Err(Error::NotConditionallyIndependent(dev));
    }
    let hx = joint.entropy_x();
    let mut sum = KahanSum::default();
    for m in &lower.members {
        sum.add(joint.cond_entropy_z_form(m)?);
    }
    sum.add(-(lower.members.len() as f64 - 1.0) * hx);
    Ok(sum.value())
}

pub fn bounds_brute(joint: &DiscreteJoint, upper: &UpperSelection, lower: &LowerSelection) -> Result<BoundsInterval> {
    Ok(BoundsInterval {
        lb: lower_bound_brute(joint, lower)?,
        ub: upper_bound_brute(joint, upper)?,
        upper: upper.node,
        lower: lower.nodes.clone(),
    })
}

/// Number of `(x, z)` terms summed by the unpartitioned and partitioned evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationCost {
    /// `|X| · Π_i |Zⁱ|`.
    pub joint: usize,
    /// `|X| · Σ_c Π_{i∈c} |Zⁱ|` over the cover.
    pub partitioned: usize,
}

pub fn enumeration_cost(joint: &DiscreteJoint, lower: &LowerSelection) -> EnumerationCost {
    let card = |m: &[usize]| m.iter().map(|&i| joint.z_cards[i]).product::<usize>();
    EnumerationCost {
        joint: joint.x_card * joint.nz(),
        partitioned: joint.x_card * lower.members.iter().map(|m| card(m)).sum::<usize>(),
    }
}

/// Runs the full and the partitioned evaluations and counts the summed terms.
pub fn instrumented_cost(joint: &DiscreteJoint, lower: &LowerSelection) -> Result<EnumerationCost> {
    let all: Vec<usize> = (0..joint.n_components()).collect();
    let mut full = 0;
    joint.cond_entropy_counted(&all, &mut full)?;
    let mut part = 0;
    for m in &lower.members {
        joint.cond_entropy_counted(m, &mut part)?;
    }
    Ok(EnumerationCost {
        joint: full,
        partitioned: part,
    })
}

/// Random strictly positive distribution over `n` outcomes.
pub fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Conditionally independent joint with random prior and channels.
pub fn random_ci_joint(rng: &mut impl Rng, x_card: usize, z_cards: &[usize]) -> Result<DiscreteJoint> {
    let px = random_distribution(rng, x_card);
    let channels: Vec<Vec<Vec<f64>>> = z_cards
        .iter()
        .map(|&c| (0..x_card).map(|_| random_distribution(rng, c)).collect())
        .collect();
    DiscreteJoint::from_channels(&px, &channels)
}

/// Arbitrary random joint; components are generally dependent given `X`.
pub fn random_joint(rng: &mut impl Rng, x_card: usize, z_cards: &[usize]) -> Result<DiscreteJoint> {
    let nz: usize = z_cards.iter().product();
    DiscreteJoint::new(x_card, z_cards.to_vec(), random_distribution(rng, x_card * nz))
}

/// A factored state `X = (X_1..X_k)` where each observation component depends
/// only on its involved sub-state, `P(zⁱ | x) = P(zⁱ | x_{inv(i)})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredModel {
    pub x_cards: Vec<usize>,
    /// `P(x)` over the mixed-radix joint state, variable 0 fastest.
    pub px: Vec<f64>,
    pub components: Vec<ObservationComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationComponent {
    /// Indices into `x_cards`.
    pub involved: Vec<usize>,
    pub card: usize,
    /// `channel[x_inv][z]` with `x_inv` mixed-radix over `involved`.
    pub channel: Vec<Vec<f64>>,
}

impl FactoredModel {
    pub fn random(rng: &mut impl Rng, x_cards: &[usize], involved: &[Vec<usize>], card: usize) -> Self {
        let nx: usize = x_cards.iter().product();
        let components = involved
            .iter()
            .map(|inv| {
                let n_inv: usize = inv.iter().map(|&v| x_cards[v]).product();
                ObservationComponent {
                    involved: inv.clone(),
                    card,
                    channel: (0..n_inv).map(|_| random_distribution(rng, card)).collect(),
                }
            })
            .collect();
        Self {
            x_cards: x_cards.to_vec(),
            px: random_distribution(rng, nx),
            components,
        }
    }

    fn digits(&self, x: usize) -> Vec<usize> {
        let mut rest = x;
        self.x_cards
            .iter()
            .map(|&c| {
                let d = rest % c;
                rest /= c;
                d
            })
            .collect()
    }

    fn sub_index(&self, digits: &[usize], vars: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for &v in vars {
            idx += digits[v] * stride;
            stride *= self.x_cards[v];
        }
        idx
    }

    pub fn to_joint(&self) -> Result<DiscreteJoint> {
        let nx = self.px.len();
        let channels: Vec<Vec<Vec<f64>>> = self
            .components
            .iter()
            .map(|c| {
                (0..nx)
                    .map(|x| c.channel[self.sub_index(&self.digits(x), &c.involved)].clone())
                    .collect()
            })
            .collect();
        DiscreteJoint::from_channels(&self.px, &channels)
    }

    /// `H(Z^s | X^{inv_s}) + H(X) − H(Z^s)`, touching only the involved sub-state.
    pub fn cond_entropy_involved(&self, members: &[usize]) -> Result<f64> {
        let mut inv: Vec<usize> = members
            .iter()
            .map(|&m| {
                self.components
                    .get(m)
                    .map(|c| c.involved.clone())
                    .ok_or_else(|| Error::InvalidCover(format!("component {m} does not exist")))
            })
            .collect::<Result<Vec<_>>>()?
            .concat();
        inv.sort_unstable();
        inv.dedup();
        let n_inv: usize = inv.iter().map(|&v| self.x_cards[v]).product();
        let mut p_inv = vec![KahanSum::default(); n_inv];
        for (x, &p) in self.px.iter().enumerate() {
            p_inv[self.sub_index(&self.digits(x), &inv)].add(p);
        }
        let p_inv: Vec<f64> = p_inv.iter().map(KahanSum::value).collect();

        let cards: Vec<usize> = members.iter().map(|&m| self.components[m].card).collect();
        let nz: usize = cards.iter().product();
        // digits of the involved sub-state, laid out like the full state for sub_index
        let mut h_z_given = KahanSum::default();
        let mut pz = vec![KahanSum::default(); nz];
        let mut digits = vec![0usize; self.x_cards.len()];
        for (xi, &p) in p_inv.iter().enumerate() {
            let mut rest = xi;
            for &v in &inv {
                digits[v] = rest % self.x_cards[v];
                rest /= self.x_cards[v];
            }
            for (z, acc) in pz.iter_mut().enumerate() {
                let mut rest = z;
                let mut q = 1.0;
                for (&m, &card) in members.iter().zip(&cards) {
                    let c = &self.components[m];
                    q *= c.channel[self.sub_index(&digits, &c.involved)][rest % card];
                    rest /= card;
                }
                acc.add(p * q);
                if q > 0.0 {
                    h_z_given.add(-p * q * q.ln());
                }
            }
        }
        let hz = entropy_of(pz.iter().map(KahanSum::value));
        let hx = entropy_of(self.px.iter().copied());
        Ok(h_z_given.value() + hx - hz)
    }
}
