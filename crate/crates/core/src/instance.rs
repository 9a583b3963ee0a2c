//! Instances, JSON (de)serialization and seeded generators.
//!
//! File schema:
//!
//! ```json
//! {"agents": 2, "goods": 3, "valuations": [{"type": "additive", "weights": [1, 2, 3]}, ...]}
//! ```

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rounding::FractionalAllocation;
use crate::valuations::{AgentId, Concave, GoodId, ValuationSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct Instance {
    agents: usize,
    goods: usize,
    valuations: Vec<ValuationSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    agents: usize,
    goods: usize,
    valuations: Vec<ValuationSpec>,
}

impl TryFrom<RawInstance> for Instance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        Instance::with_counts(raw.agents, raw.goods, raw.valuations)
    }
}

impl Instance {
    /// Builds an instance from one valuation per agent over a common set of
    /// goods.
    pub fn new(valuations: Vec<ValuationSpec>) -> Result<Self> {
        let goods = valuations.first().map_or(0, ValuationSpec::goods);
        Instance::with_counts(valuations.len(), goods, valuations)
    }

    pub fn with_counts(agents: usize, goods: usize, valuations: Vec<ValuationSpec>) -> Result<Self> {
        if agents == 0 {
            return Err(Error::schema("/agents", "need at least one agent"));
        }
        if valuations.len() != agents {
            return Err(Error::schema(
                "/valuations",
                format!("expected {agents} valuations, got {}", valuations.len()),
            ));
        }
        for (i, v) in valuations.iter().enumerate() {
            if v.goods() != goods {
                let field = match v {
                    ValuationSpec::Coverage { .. } => "covers",
                    _ => "weights",
                };
                return Err(Error::schema(
                    format!("/valuations/{i}/{field}"),
                    format!("expected {goods} goods, got {}", v.goods()),
                ));
            }
            v.validate()
                .map_err(|e| prefix_pointer(e, &format!("/valuations/{i}")))?;
        }
        Ok(Instance {
            agents,
            goods,
            valuations,
        })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn valuations(&self) -> &[ValuationSpec] {
        &self.valuations
    }

    pub fn valuation(&self, i: AgentId) -> &ValuationSpec {
        &self.valuations[i]
    }

    /// `max_{i,j} v_i({j})`.
    pub fn max_singleton(&self) -> f64 {
        self.valuations
            .iter()
            .flat_map(|v| (0..self.goods).map(move |g| v.singleton(g)))
            .fold(0.0, f64::max)
    }

    /// Valuations of `agents` restricted to `goods` (both renumbered).
    pub fn restricted_valuations(&self, agents: &[AgentId], goods: &[GoodId]) -> Vec<ValuationSpec> {
        agents.iter().map(|&i| self.valuations[i].restrict(goods)).collect()
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("instances serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Parses an instance, reporting schema violations with a JSON pointer
    /// down to the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let shell: Shell = from_json_with_pointer(text)?;
        let valuations = shell
            .valuations
            .into_iter()
            .enumerate()
            .map(|(i, v)| parse_spec(v).map_err(|e| prefix_pointer(e, &format!("/valuations/{i}"))))
            .collect::<Result<Vec<_>>>()?;
        Instance::with_counts(shell.agents, shell.goods, valuations)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instances serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Instance::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Shell {
    agents: usize,
    goods: usize,
    valuations: Vec<serde_json::Value>,
}

/// Externally tagged mirror of [`ValuationSpec`]; unlike the internally
/// tagged form it lets the path tracker see inside each variant.
#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum TaggedSpec {
    Additive { weights: Vec<f64> },
    Coverage { element_weights: Vec<f64>, covers: Vec<Vec<usize>> },
    BudgetAdditive { weights: Vec<f64>, cap: f64 },
    ConcaveAdditive { weights: Vec<f64>, concave: Concave },
}

fn parse_spec(value: serde_json::Value) -> Result<ValuationSpec> {
    let serde_json::Value::Object(mut fields) = value else {
        return Err(Error::schema("", "valuation must be an object"));
    };
    let tag = match fields.remove("type") {
        Some(serde_json::Value::String(t)) => t,
        Some(_) => return Err(Error::schema("/type", "type must be a string")),
        None => return Err(Error::schema("", "missing field `type`")),
    };
    let mut wrapped = serde_json::Map::new();
    wrapped.insert(tag, serde_json::Value::Object(fields));
    let spec = match serde_path_to_error::deserialize(serde_json::Value::Object(wrapped)) {
        Ok(TaggedSpec::Additive { weights }) => ValuationSpec::Additive { weights },
        Ok(TaggedSpec::Coverage {
            element_weights,
            covers,
        }) => ValuationSpec::Coverage {
            element_weights,
            covers,
        },
        Ok(TaggedSpec::BudgetAdditive { weights, cap }) => ValuationSpec::BudgetAdditive { weights, cap },
        Ok(TaggedSpec::ConcaveAdditive { weights, concave }) => {
            ValuationSpec::ConcaveAdditive { weights, concave }
        }
        Err(err) => {
            // the first segment is the variant name
            let pointer = pointer_of(err.path().iter().skip(1));
            let message = err.into_inner().to_string();
            let pointer = if pointer.is_empty() && message.starts_with("unknown variant") {
                "/type".to_string()
            } else {
                pointer
            };
            return Err(Error::schema(pointer, message));
        }
    };
    Ok(spec)
}

fn pointer_of<'a>(segments: impl Iterator<Item = &'a serde_path_to_error::Segment>) -> String {
    use serde_path_to_error::Segment;
    let mut pointer = String::new();
    for seg in segments {
        match seg {
            Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
            Segment::Map { key } => pointer.push_str(&format!("/{key}")),
            Segment::Enum { .. } | Segment::Unknown => {}
        }
    }
    pointer
}

fn prefix_pointer(err: Error, prefix: &str) -> Error {
    match err {
        Error::Schema { pointer, message } => Error::schema(format!("{prefix}{pointer}"), message),
        other => other,
    }
}

/// Deserializes `T`, mapping failures to [`Error::Schema`] with a JSON
/// pointer to the offending field.
pub fn from_json_with_pointer<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    match serde_path_to_error::deserialize::<_, T>(de) {
        Ok(v) => Ok(v),
        Err(err) => {
            let mut pointer = pointer_of(err.path().iter());
            let inner = err.into_inner();
            let message = inner.to_string();
            // validation errors raised inside try_from carry their own pointer
            if let Some((p, m)) = message
                .strip_prefix("invalid input at ")
                .and_then(|rest| rest.split_once(": "))
            {
                let p = p.split(" at line").next().unwrap_or(p);
                return Err(Error::schema(format!("{pointer}{p}"), m.to_string()));
            }
            if pointer.is_empty() {
                pointer.push('/');
            }
            Err(Error::schema(pointer, message))
        }
    }
}

pub fn load_point(path: impl AsRef<Path>) -> Result<FractionalAllocation> {
    from_json_with_pointer(&fs::read_to_string(path)?)
}

pub fn save_point(x: &FractionalAllocation, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string(x).expect("points serialize") + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Additive,
    Coverage,
    BudgetAdditive,
    ConcaveAdditive,
    Mixed,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "additive" => Family::Additive,
            "coverage" => Family::Coverage,
            "budget_additive" => Family::BudgetAdditive,
            "concave_additive" => Family::ConcaveAdditive,
            "mixed" => Family::Mixed,
            other => return Err(Error::input(format!("unknown family {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub family: Family,
    pub agents: usize,
    pub goods: usize,
    pub seed: u64,
    /// Caps every singleton weight at `ε · total / agents` (additive only).
    pub small_goods: Option<f64>,
}

/// Draws a random instance; identical configs give identical instances.
pub fn generate(cfg: &GenConfig) -> Result<Instance> {
    if cfg.agents == 0 {
        return Err(Error::input("need at least one agent"));
    }
    if let Some(eps) = cfg.small_goods {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::input(format!("small_goods must lie in (0, 1], got {eps}")));
        }
        if cfg.family != Family::Additive {
            return Err(Error::input("small_goods is only supported for the additive family"));
        }
        if (cfg.goods as f64) * eps < cfg.agents as f64 {
            return Err(Error::input(format!(
                "small_goods {eps} needs at least {} goods for {} agents",
                (cfg.agents as f64 / eps).ceil(),
                cfg.agents
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.goods;
    let valuations = (0..cfg.agents)
        .map(|_| {
            let family = match cfg.family {
                Family::Mixed => *[
                    Family::Additive,
                    Family::Coverage,
                    Family::BudgetAdditive,
                    Family::ConcaveAdditive,
                ]
                .choose(&mut rng)
                .expect("nonempty"),
                f => f,
            };
            let mut spec = draw_spec(family, m, &mut rng);
            if let (Some(eps), ValuationSpec::Additive { weights }) = (cfg.small_goods, &mut spec) {
                cap_singletons(weights, eps, cfg.agents);
            }
            spec
        })
        .collect();
    Instance::with_counts(cfg.agents, m, valuations)
}

fn draw_spec(family: Family, m: usize, rng: &mut ChaCha8Rng) -> ValuationSpec {
    let weights = |rng: &mut ChaCha8Rng, scale: f64| -> Vec<f64> {
        (0..m).map(|_| scale * rng.gen_range(0.05..1.0)).collect()
    };
    match family {
        Family::Additive => ValuationSpec::Additive {
            weights: weights(rng, 1.0),
        },
        Family::BudgetAdditive => {
            let w = weights(rng, 1.0);
            let total: f64 = w.iter().sum();
            let cap = total * rng.gen_range(0.3..0.8);
            ValuationSpec::BudgetAdditive { weights: w, cap }
        }
        Family::ConcaveAdditive => ValuationSpec::ConcaveAdditive {
            weights: weights(rng, 4.0),
            concave: if rng.gen_bool(0.5) {
                Concave::Sqrt
            } else {
                Concave::Log1p
            },
        },
        Family::Coverage => {
            let universe = m + 2;
            let element_weights = (0..universe).map(|_| rng.gen_range(0.2..1.5)).collect();
            let elements: Vec<usize> = (0..universe).collect();
            let covers = (0..m)
                .map(|_| {
                    let k = rng.gen_range(1..=3.min(universe));
                    let mut c: Vec<usize> = elements.choose_multiple(rng, k).copied().collect();
                    c.sort_unstable();
                    c
                })
                .collect();
            ValuationSpec::Coverage {
                element_weights,
                covers,
            }
        }
        Family::Mixed => unreachable!("mixed is resolved per agent"),
    }
}

/// Water-fills `weights` so that `max w ≤ eps · Σw / agents`.
fn cap_singletons(weights: &mut [f64], eps: f64, agents: usize) {
    let n = agents as f64;
    let m = weights.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    let sorted: Vec<f64> = order.iter().map(|&g| weights[g]).collect();
    let mut rest: f64 = sorted.iter().sum();
    for k in 0..m {
        if k > 0 {
            rest -= sorted[k - 1];
        }
        let denom = n - eps * k as f64;
        if denom <= 0.0 {
            break;
        }
        let cap = eps * rest / denom;
        let top_ok = k == 0 || sorted[k - 1] >= cap;
        if top_ok && sorted[k] <= cap {
            for &g in &order[..k] {
                weights[g] = cap;
            }
            return;
        }
    }
    // only the all-equal profile satisfies the cap
    let mean = sorted.iter().sum::<f64>() / m as f64;
    weights.iter_mut().for_each(|w| *w = mean);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuations::check_submodular;

    #[test]
    fn minimal_instance_loads() {
        let text = r#"{"agents":1,"goods":1,"valuations":[{"type":"additive","weights":[1.0]}]}"#;
        let inst = Instance::from_json(text).unwrap();
        assert_eq!(inst.agents(), 1);
        assert_eq!(inst.valuation(0).total(), 1.0);
    }

    #[test]
    fn length_mismatch_points_at_field() {
        let text = r#"{"agents":1,"goods":2,"valuations":[{"type":"additive","weights":[1.0]}]}"#;
        match Instance::from_json(text) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/valuations/0/weights"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_error_points_at_field() {
        let text = r#"{"agents":1,"goods":1,"valuations":[{"type":"additive","weights":["x"]}]}"#;
        match Instance::from_json(text) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/valuations/0/weights/0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_weight_rejected() {
        let text = r#"{"agents":1,"goods":2,"valuations":[{"type":"budget_additive","weights":[1.0,2.0],"cap":-1}]}"#;
        match Instance::from_json(text) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/valuations/0/cap"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_is_schema_error() {
        assert!(matches!(Instance::from_json("{"), Err(Error::Schema { .. })));
    }

    #[test]
    fn generate_is_deterministic() {
        let cfg = GenConfig {
            family: Family::Mixed,
            agents: 3,
            goods: 6,
            seed: 11,
            small_goods: None,
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    }

    #[test]
    fn small_goods_cap_holds() {
        for seed in 0..20 {
            for goods in [20, 40] {
                let cfg = GenConfig {
                    family: Family::Additive,
                    agents: 2,
                    goods,
                    seed,
                    small_goods: Some(0.1),
                };
                let inst = generate(&cfg).unwrap();
                for v in inst.valuations() {
                    let ValuationSpec::Additive { weights } = v else { unreachable!() };
                    let total: f64 = weights.iter().sum();
                    let cap = 0.1 * total / 2.0;
                    assert!(weights.iter().all(|&w| w <= cap * (1.0 + 1e-12)), "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn small_goods_validation() {
        let mut cfg = GenConfig {
            family: Family::Coverage,
            agents: 2,
            goods: 20,
            seed: 0,
            small_goods: Some(0.1),
        };
        assert!(generate(&cfg).is_err());
        cfg.family = Family::Additive;
        cfg.goods = 10;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn coverage_family_is_submodular() {
        for seed in 0..10 {
            let cfg = GenConfig {
                family: Family::Coverage,
                agents: 2,
                goods: 8,
                seed,
                small_goods: None,
            };
            for v in generate(&cfg).unwrap().valuations() {
                assert!(check_submodular(v).unwrap());
            }
        }
    }
}
