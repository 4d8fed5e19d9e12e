//! JSON encoding of networks, evidence and query results. Variables are
//! referenced by name.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    all_tuples, build_network, ConstraintRelation, Cpd, Evidence, GaussianConfig, HybridMixedNetwork,
    LinearGaussianCpd, TabularCpd, Value, VarId, VarKind, Variable,
};
use crate::potential::GaussianMoments;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum VariableJson {
    Discrete { name: String, cardinality: usize },
    Continuous { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigJson {
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: Vec<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CpdJson {
    Tabular {
        child: String,
        #[serde(default)]
        parents: Vec<String>,
        table: Vec<f64>,
    },
    LinearGaussian {
        child: String,
        #[serde(default)]
        discrete_parents: Vec<String>,
        #[serde(default)]
        continuous_parents: Vec<String>,
        configs: Vec<ConfigJson>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintJson {
    pub scope: Vec<String>,
    pub forbidden: Vec<Vec<usize>>,
}

/// A network file, optionally carrying evidence as `name -> value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkJson {
    pub variables: Vec<VariableJson>,
    pub cpds: Vec<CpdJson>,
    #[serde(default)]
    pub constraints: Vec<ConstraintJson>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub evidence: BTreeMap<String, f64>,
}

impl NetworkJson {
    pub fn from_network(net: &HybridMixedNetwork, evidence: &Evidence) -> Self {
        let name = |v: &VarId| net.variable(*v).name.clone();
        let names = |vs: &[VarId]| vs.iter().map(name).collect::<Vec<_>>();
        let variables = net
            .variables()
            .iter()
            .map(|v| match v.kind {
                VarKind::Discrete { cardinality } => VariableJson::Discrete {
                    name: v.name.clone(),
                    cardinality,
                },
                VarKind::Continuous => VariableJson::Continuous { name: v.name.clone() },
            })
            .collect();
        let cpds = net
            .cpds()
            .iter()
            .map(|c| match c {
                Cpd::Tabular(t) => CpdJson::Tabular {
                    child: name(&t.child),
                    parents: names(&t.parents),
                    table: t.table.clone(),
                },
                Cpd::LinearGaussian(g) => CpdJson::LinearGaussian {
                    child: name(&g.child),
                    discrete_parents: names(&g.discrete_parents),
                    continuous_parents: names(&g.continuous_parents),
                    configs: g
                        .configs
                        .iter()
                        .map(|c| ConfigJson {
                            intercept: c.intercept,
                            coefficients: c.coefficients.clone(),
                            variance: c.variance,
                        })
                        .collect(),
                },
            })
            .collect();
        let constraints = net
            .constraints()
            .iter()
            .map(|c| {
                let cards: Vec<usize> = c.scope.iter().map(|v| net.cardinality(*v)).collect();
                ConstraintJson {
                    scope: names(&c.scope),
                    forbidden: all_tuples(&cards).into_iter().filter(|t| !c.allowed.contains(t)).collect(),
                }
            })
            .collect();
        let evidence = evidence
            .iter()
            .map(|(v, x)| {
                let value = match x {
                    Value::Discrete(d) => d as f64,
                    Value::Continuous(c) => c,
                };
                (name(&v), value)
            })
            .collect();
        NetworkJson {
            variables,
            cpds,
            constraints,
            evidence,
        }
    }

    /// Validates and builds the network and its evidence.
    pub fn to_network(&self) -> Result<(HybridMixedNetwork, Evidence)> {
        let index: BTreeMap<&str, usize> = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                VariableJson::Discrete { name, .. } | VariableJson::Continuous { name } => (name.as_str(), i),
            })
            .collect();
        if index.len() != self.variables.len() {
            return Err(Error::InvalidNetwork("duplicate variable names".into()));
        }
        let id = |n: &String| {
            index
                .get(n.as_str())
                .map(|&i| VarId(i))
                .ok_or_else(|| Error::DanglingVariableReference(n.clone()))
        };
        let ids = |ns: &[String]| ns.iter().map(id).collect::<Result<Vec<_>>>();
        let variables = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                VariableJson::Discrete { name, cardinality } => Variable::discrete(i, name.clone(), *cardinality),
                VariableJson::Continuous { name } => Variable::continuous(i, name.clone()),
            })
            .collect::<Vec<_>>();
        let cpds = self
            .cpds
            .iter()
            .map(|c| {
                Ok(match c {
                    CpdJson::Tabular { child, parents, table } => Cpd::Tabular(TabularCpd {
                        child: id(child)?,
                        parents: ids(parents)?,
                        table: table.clone(),
                    }),
                    CpdJson::LinearGaussian {
                        child,
                        discrete_parents,
                        continuous_parents,
                        configs,
                    } => Cpd::LinearGaussian(LinearGaussianCpd {
                        child: id(child)?,
                        discrete_parents: ids(discrete_parents)?,
                        continuous_parents: ids(continuous_parents)?,
                        configs: configs
                            .iter()
                            .map(|c| GaussianConfig {
                                intercept: c.intercept,
                                coefficients: c.coefficients.clone(),
                                variance: c.variance,
                            })
                            .collect(),
                    }),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                let scope = ids(&c.scope)?;
                let cards = scope
                    .iter()
                    .map(|v| {
                        variables[v.index()]
                            .cardinality()
                            .ok_or_else(|| Error::InvalidNetwork(format!("constraint over continuous `{}`", variables[v.index()].name)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ConstraintRelation::from_forbidden(scope, &cards, &c.forbidden))
            })
            .collect::<Result<Vec<_>>>()?;
        let net = build_network(variables, cpds, constraints)?;
        let evidence = parse_evidence(&net, &self.evidence)?;
        Ok((net, evidence))
    }
}

/// Evidence from `name -> value`; discrete values must be integral.
pub fn parse_evidence(net: &HybridMixedNetwork, raw: &BTreeMap<String, f64>) -> Result<Evidence> {
    let mut ev = Evidence::new();
    for (name, &x) in raw {
        let v = net
            .var_by_name(name)
            .ok_or_else(|| Error::DanglingVariableReference(name.clone()))?;
        let value = if net.is_discrete(v) {
            if x.fract() != 0.0 || x < 0.0 {
                return Err(Error::InvalidEvidence(format!("`{name}` needs an integer value, got {x}")));
            }
            Value::Discrete(x as usize)
        } else {
            Value::Continuous(x)
        };
        ev.insert(v, value);
    }
    ev.validate(net)?;
    Ok(ev)
}

pub fn read_network(path: &Path) -> Result<(HybridMixedNetwork, Evidence)> {
    let text = std::fs::read_to_string(path)?;
    let json: NetworkJson = serde_json::from_str(&text)?;
    json.to_network()
}

pub fn network_to_string(net: &HybridMixedNetwork, evidence: &Evidence) -> Result<String> {
    Ok(serde_json::to_string_pretty(&NetworkJson::from_network(net, evidence))?)
}

pub fn write_network(path: &Path, net: &HybridMixedNetwork, evidence: &Evidence) -> Result<()> {
    std::fs::write(path, network_to_string(net, evidence)? + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsJson {
    pub mean: f64,
    pub variance: f64,
}

/// Posterior marginals keyed by variable name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalsJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_evidence: Option<f64>,
    pub discrete: BTreeMap<String, Vec<f64>>,
    pub continuous: BTreeMap<String, MomentsJson>,
}

impl MarginalsJson {
    pub fn new(
        net: &HybridMixedNetwork,
        log_evidence: Option<f64>,
        discrete: &BTreeMap<VarId, Vec<f64>>,
        continuous: &BTreeMap<VarId, GaussianMoments>,
    ) -> Self {
        MarginalsJson {
            log_evidence,
            discrete: discrete
                .iter()
                .map(|(v, p)| (net.variable(*v).name.clone(), p.clone()))
                .collect(),
            continuous: continuous
                .iter()
                .map(|(v, m)| {
                    (
                        net.variable(*v).name.clone(),
                        MomentsJson {
                            mean: m.mean[0],
                            variance: m.covariance[(0, 0)],
                        },
                    )
                })
                .collect(),
        }
    }
}
