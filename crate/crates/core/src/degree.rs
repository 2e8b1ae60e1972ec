//! Node- and edge-perspective degree distributions and rate bookkeeping.
//!
//! Distributions are stored sparsely by node degree `i` regardless of
//! perspective. An edge-perspective coefficient `λ_i` is the fraction of edges
//! attached to degree-`i` nodes (the polynomial exponent is `i - 1`), so the
//! two perspectives share one index space and conversion is lossless.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Absolute tolerance on the coefficient sum.
pub const SUM_TOLERANCE: f64 = 1e-12;
/// Inputs off by at most this much are renormalized instead of rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perspective {
    Node,
    Edge,
}

/// A validated degree distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DegreeDistribution {
    perspective: Perspective,
    terms: BTreeMap<u32, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    perspective: Perspective,
    terms: BTreeMap<u32, f64>,
}

impl TryFrom<RawDistribution> for DegreeDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        DegreeDistribution::new(raw.perspective, raw.terms)
    }
}

impl From<DegreeDistribution> for RawDistribution {
    fn from(d: DegreeDistribution) -> Self {
        RawDistribution {
            perspective: d.perspective,
            terms: d.terms,
        }
    }
}

impl DegreeDistribution {
    /// Validates and builds a distribution. Zero coefficients are dropped.
    pub fn new(perspective: Perspective, terms: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (degree, coeff) in terms {
            if degree == 0 {
                return Err(invalid("degree 0 is not allowed"));
            }
            if !coeff.is_finite() || !(0.0..=1.0 + RENORMALIZE_TOLERANCE).contains(&coeff) {
                return Err(invalid(format!("coefficient {coeff} for degree {degree} outside [0, 1]")));
            }
            if coeff > 0.0 {
                *map.entry(degree).or_insert(0.0) += coeff;
            }
        }
        if map.is_empty() {
            return Err(invalid("empty degree distribution"));
        }
        let sum: f64 = map.values().sum();
        let dev = (sum - 1.0).abs();
        if dev > RENORMALIZE_TOLERANCE {
            return Err(invalid(format!("coefficients sum to {sum}, expected 1")));
        }
        if dev > SUM_TOLERANCE {
            log::warn!("renormalizing degree distribution with coefficient sum {sum}");
        }
        if dev > 0.0 {
            for c in map.values_mut() {
                *c /= sum;
            }
        }
        Ok(DegreeDistribution { perspective, terms: map })
    }

    /// All nodes (or edges) of a single degree.
    pub fn regular(perspective: Perspective, degree: u32) -> Result<Self> {
        Self::new(perspective, [(degree, 1.0)])
    }

    pub fn perspective(&self) -> Perspective {
        self.perspective
    }

    /// `(degree, coefficient)` pairs in increasing degree order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.terms.iter().map(|(&d, &c)| (d, c))
    }

    pub fn coefficient(&self, degree: u32) -> f64 {
        self.terms.get(&degree).copied().unwrap_or(0.0)
    }

    pub fn max_degree(&self) -> u32 {
        *self.terms.keys().next_back().expect("non-empty")
    }

    pub fn min_degree(&self) -> u32 {
        *self.terms.keys().next().expect("non-empty")
    }

    /// The single degree of a regular distribution.
    pub fn regular_degree(&self) -> Option<u32> {
        (self.terms.len() == 1).then(|| self.min_degree())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `ω_i = iΩ_i / Σ_j jΩ_j`. Edge-perspective inputs are returned unchanged.
    pub fn to_edge(&self) -> DegreeDistribution {
        match self.perspective {
            Perspective::Edge => self.clone(),
            Perspective::Node => {
                let total: f64 = self.iter().map(|(d, c)| d as f64 * c).sum();
                let terms = self.iter().map(|(d, c)| (d, d as f64 * c / total)).collect();
                DegreeDistribution {
                    perspective: Perspective::Edge,
                    terms,
                }
            }
        }
    }

    /// Inverse of [`to_edge`](Self::to_edge): `Ω_i = (ω_i / i) / Σ_j ω_j / j`.
    pub fn to_node(&self) -> DegreeDistribution {
        match self.perspective {
            Perspective::Node => self.clone(),
            Perspective::Edge => {
                let total: f64 = self.iter().map(|(d, c)| c / d as f64).sum();
                let terms = self.iter().map(|(d, c)| (d, c / d as f64 / total)).collect();
                DegreeDistribution {
                    perspective: Perspective::Node,
                    terms,
                }
            }
        }
    }

    /// Average node degree `Σ_i iΩ_i` (converting from edge perspective if needed).
    pub fn average_degree(&self) -> f64 {
        match self.perspective {
            Perspective::Node => self.iter().map(|(d, c)| d as f64 * c).sum(),
            Perspective::Edge => 1.0 / self.iter().map(|(d, c)| c / d as f64).sum::<f64>(),
        }
    }

    /// Total variation distance between two distributions of the same perspective.
    pub fn total_variation(&self, other: &DegreeDistribution) -> f64 {
        let mut degrees: Vec<u32> = self.terms.keys().chain(other.terms.keys()).copied().collect();
        degrees.sort_unstable();
        degrees.dedup();
        0.5 * degrees
            .into_iter()
            .map(|d| (self.coefficient(d) - other.coefficient(d)).abs())
            .sum::<f64>()
    }
}

impl fmt::Display for DegreeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (d, c) in self.iter() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let exp = match self.perspective {
                Perspective::Node => d,
                Perspective::Edge => d - 1,
            };
            write!(f, "{c:.4}x^{exp}")?;
        }
        Ok(())
    }
}

/// Free-function form of [`DegreeDistribution::to_edge`].
pub fn node_to_edge(dist: &DegreeDistribution) -> Result<DegreeDistribution> {
    if dist.perspective != Perspective::Node {
        return Err(invalid("expected a node-perspective distribution"));
    }
    Ok(dist.to_edge())
}

/// Free-function form of [`DegreeDistribution::to_node`].
pub fn edge_to_node(dist: &DegreeDistribution) -> Result<DegreeDistribution> {
    if dist.perspective != Perspective::Edge {
        return Err(invalid("expected an edge-perspective distribution"));
    }
    Ok(dist.to_node())
}

pub fn average_degree(dist: &DegreeDistribution) -> f64 {
    dist.average_degree()
}

/// Builds the check-node distribution on two consecutive degrees that balances
/// the edge count of `vn` at inner rate `rate` (`k'·Λ'(1) = n_i·Ω'(1)`).
///
/// An integral target average yields a regular distribution.
pub fn complete_check_distribution(vn: &DegreeDistribution, rate: f64) -> Result<DegreeDistribution> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(invalid(format!("rate {rate} outside (0, 1)")));
    }
    let target = vn.average_degree() * rate / (1.0 - rate);
    if target < 1.0 {
        return Err(Error::Infeasible(format!(
            "required average check degree {target} is below 1"
        )));
    }
    let nearest = target.round();
    if (target - nearest).abs() <= SUM_TOLERANCE * target {
        return DegreeDistribution::regular(Perspective::Node, nearest as u32);
    }
    let low = target.floor();
    let low_weight = low + 1.0 - target;
    let low = low as u32;
    DegreeDistribution::new(Perspective::Node, [(low, low_weight), (low + 1, 1.0 - low_weight)])
}

/// Dimensions of a two-stage code: `k` information bits, `k'` intermediate bits,
/// `n` output bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateSpec {
    pub k: usize,
    pub k_prime: usize,
    pub n: usize,
}

impl RateSpec {
    pub fn new(k: usize, k_prime: usize, n: usize) -> Result<Self> {
        if !(k > 0 && k < k_prime && k_prime < n) {
            return Err(invalid(format!("need 0 < k < k' < n, got {k}, {k_prime}, {n}")));
        }
        Ok(RateSpec { k, k_prime, n })
    }

    /// Number of outer parity bits.
    pub fn n_outer(&self) -> usize {
        self.k_prime - self.k
    }

    /// Number of inner parity bits.
    pub fn n_inner(&self) -> usize {
        self.n - self.k_prime
    }

    pub fn outer_rate(&self) -> f64 {
        self.k as f64 / self.k_prime as f64
    }

    pub fn inner_rate(&self) -> f64 {
        self.k_prime as f64 / self.n as f64
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(terms: &[(u32, f64)]) -> DegreeDistribution {
        DegreeDistribution::new(Perspective::Node, terms.iter().copied()).unwrap()
    }

    fn optimized_vn() -> DegreeDistribution {
        node(&[(6, 0.2063), (7, 0.7472), (100, 0.0465)])
    }

    #[test]
    fn regular_maps_to_itself() {
        let omega = node(&[(7, 1.0)]).to_edge();
        assert_eq!(omega.perspective(), Perspective::Edge);
        assert_eq!(omega.coefficient(7), 1.0);
        let back = DegreeDistribution::regular(Perspective::Edge, 5).unwrap().to_node();
        assert_eq!(back.coefficient(5), 1.0);
    }

    #[test]
    fn node_to_edge_examples() {
        let lambda = optimized_vn().to_edge();
        assert!((lambda.coefficient(100) - 4.65 / 11.1182).abs() < 1e-12);
        assert!((lambda.coefficient(100) - 0.41823).abs() < 1e-5);

        let omega = node(&[(2, 0.5), (4, 0.5)]).to_edge();
        assert!((omega.coefficient(2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((omega.coefficient(4) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn edge_to_node_examples() {
        let e = DegreeDistribution::new(Perspective::Edge, [(2, 1.0 / 3.0), (4, 2.0 / 3.0)]).unwrap();
        let n = edge_to_node(&e).unwrap();
        assert!((n.coefficient(2) - 0.5).abs() < 1e-12);
        assert!((n.coefficient(4) - 0.5).abs() < 1e-12);

        let orig = optimized_vn();
        let back = edge_to_node(&node_to_edge(&orig).unwrap()).unwrap();
        for (d, c) in orig.iter() {
            assert!((back.coefficient(d) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_perspective_is_rejected() {
        assert!(node_to_edge(&optimized_vn().to_edge()).is_err());
        assert!(edge_to_node(&optimized_vn()).is_err());
    }

    #[test]
    fn average_degrees() {
        assert_eq!(node(&[(7, 1.0)]).average_degree(), 7.0);
        assert!((optimized_vn().average_degree() - 11.1182).abs() < 1e-12);
        assert!((node(&[(11, 0.879), (12, 0.121)]).average_degree() - 11.121).abs() < 1e-12);
        // The edge view reports the same node average.
        assert!((optimized_vn().to_edge().average_degree() - 11.1182).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(DegreeDistribution::new(Perspective::Node, []).is_err());
        assert!(DegreeDistribution::new(Perspective::Node, [(0, 1.0)]).is_err());
        assert!(DegreeDistribution::new(Perspective::Node, [(3, 0.5)]).is_err());
        assert!(DegreeDistribution::new(Perspective::Node, [(3, -0.1), (4, 1.1)]).is_err());
        assert!(DegreeDistribution::new(Perspective::Node, [(3, f64::NAN)]).is_err());
        // Slightly off sums are renormalized.
        let d = DegreeDistribution::new(Perspective::Node, [(3, 0.5), (4, 0.5 + 5e-10)]).unwrap();
        assert!((d.iter().map(|(_, c)| c).sum::<f64>() - 1.0).abs() < 1e-15);
        // Zero coefficients are dropped.
        let d = DegreeDistribution::new(Perspective::Node, [(3, 0.0), (4, 1.0)]).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn complete_check_examples() {
        let omega = complete_check_distribution(&optimized_vn(), 0.5).unwrap();
        assert!((omega.coefficient(11) - 0.879).abs() < 0.005);
        assert!((omega.coefficient(12) - 0.121).abs() < 0.005);
        assert_eq!(omega.len(), 2);

        let omega = complete_check_distribution(&node(&[(6, 1.0)]), 0.5).unwrap();
        assert_eq!(omega.regular_degree(), Some(6));

        let omega = complete_check_distribution(&node(&[(4, 1.0)]), 2.0 / 3.0).unwrap();
        assert_eq!(omega.regular_degree(), Some(8));
    }

    #[test]
    fn complete_check_errors() {
        assert!(matches!(
            complete_check_distribution(&node(&[(1, 1.0)]), 0.3),
            Err(Error::Infeasible(_))
        ));
        assert!(complete_check_distribution(&node(&[(3, 1.0)]), 1.0).is_err());
        assert!(complete_check_distribution(&node(&[(3, 1.0)]), 0.0).is_err());
    }

    #[test]
    fn json_format() {
        let d = node(&[(2, 0.5), (4, 0.5)]);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"perspective":"node","terms":{"2":0.5,"4":0.5}}"#);
        let back: DegreeDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<DegreeDistribution>(r#"{"perspective":"edge","terms":{"2":0.7}}"#).is_err());
        assert!(serde_json::from_str::<DegreeDistribution>(r#"{"perspective":"edge","terms":{}}"#).is_err());
    }

    #[test]
    fn rate_spec() {
        let r = RateSpec::new(10000, 10200, 20400).unwrap();
        assert_eq!(r.n_outer(), 200);
        assert_eq!(r.n_inner(), 10200);
        assert!((r.rate() - r.inner_rate() * r.outer_rate()).abs() < 1e-15);
        assert!((r.outer_rate() - 50.0 / 51.0).abs() < 1e-15);
        assert!(RateSpec::new(10, 10, 20).is_err());
        assert!(RateSpec::new(10, 12, 12).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dist() -> impl Strategy<Value = DegreeDistribution> {
            prop::collection::btree_map(1u32..120, 0.01f64..1.0, 1..8).prop_map(|m| {
                let s: f64 = m.values().sum();
                DegreeDistribution::new(Perspective::Node, m.into_iter().map(|(d, c)| (d, c / s))).unwrap()
            })
        }

        proptest! {
            #[test]
            fn round_trip_identity(d in dist()) {
                let back = d.to_edge().to_node();
                for (deg, c) in d.iter() {
                    prop_assert!((back.coefficient(deg) - c).abs() < 1e-12);
                }
            }

            #[test]
            fn check_completion_balances_edges(d in dist(), rate in 0.05f64..0.95) {
                if let Ok(omega) = complete_check_distribution(&d, rate) {
                    let want = d.average_degree() * rate / (1.0 - rate);
                    prop_assert!(((omega.average_degree() - want) / want).abs() < 1e-12);
                    prop_assert!(omega.iter().all(|(_, c)| c >= 0.0));
                    prop_assert!((omega.iter().map(|(_, c)| c).sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
