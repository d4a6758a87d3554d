use std::path::PathBuf;

use crate::algorithms::AlgorithmId;
use crate::error::{ConfigError, Error, Result};
use crate::netsim::NetworkModel;

use super::config::{Backend, EnvConfig, ModelOverrides, TestConfig};

/// Name of the single variant of a plan without sweeps.
pub const DEFAULT_VARIANT: &str = "default";

/// One network-model variant of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    /// Overrides as written in the sweep, before resolution.
    pub set: ModelOverrides,
    /// Environment model with `set` applied.
    pub model: NetworkModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPoint {
    pub algorithm: AlgorithmId,
    pub p: usize,
    pub msg_bytes: u64,
    /// Index into [`RunPlan::variants`].
    pub variant: usize,
    pub backend: Backend,
}

/// Points that share a run directory: same backend, variant and rank count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub backend: Backend,
    pub variant: usize,
    pub p: usize,
}

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub test: TestConfig,
    /// Descriptor text recorded in metadata; the canonical JSON of `test`
    /// unless the plan came from a file.
    pub descriptor: String,
    pub test_id: String,
    pub variants: Vec<Variant>,
    pub sizes: Vec<u64>,
    /// Algorithm-major, then rank count, size, variant, backend.
    pub points: Vec<RunPoint>,
}

pub fn plan_runs(env: &EnvConfig, test: &TestConfig) -> Result<RunPlan> {
    let mut test = test.clone();
    test.fill_defaults();
    let violations = test.violations();
    if !violations.is_empty() {
        return Err(ConfigError::Schema {
            path: PathBuf::from("<test>"),
            violations,
        }
        .into());
    }
    let base = env.model();
    let variants: Vec<Variant> = if test.sweeps.is_empty() {
        vec![Variant {
            name: DEFAULT_VARIANT.into(),
            set: ModelOverrides::default(),
            model: base,
        }]
    } else {
        test.sweeps
            .iter()
            .map(|s| Variant {
                name: s.name.clone(),
                set: s.set.clone(),
                model: s.set.apply(&base),
            })
            .collect()
    };
    for v in &variants {
        if let Some(bad) = v.model.violations().first() {
            return Err(Error::usage(format!("variant {}: {bad}", v.name)));
        }
    }
    let sizes = test.sizes.expand();
    let algorithms = test.algorithm_ids()?;
    let backends = test.backend.engines();

    let mut points = Vec::new();
    for &algorithm in &algorithms {
        for &p in &test.ranks {
            for &msg_bytes in &sizes {
                for variant in 0..variants.len() {
                    for &backend in &backends {
                        points.push(RunPoint {
                            algorithm,
                            p,
                            msg_bytes,
                            variant,
                            backend,
                        });
                    }
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::usage("the run matrix is empty"));
    }
    Ok(RunPlan {
        descriptor: test.to_json(),
        test_id: test.name.clone().unwrap_or_else(|| "test".into()),
        test,
        variants,
        sizes,
        points,
    })
}

impl RunPlan {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distinct run directories in execution order: backend, then variant,
    /// then rank count, each in descriptor order.
    pub fn runs(&self) -> Vec<RunKey> {
        let mut keys = Vec::new();
        for backend in self.test.backend.engines() {
            for variant in 0..self.variants.len() {
                for &p in &self.test.ranks {
                    let k = RunKey { backend, variant, p };
                    if !keys.contains(&k) && self.points.iter().any(|pt| pt.key() == k) {
                        keys.push(k);
                    }
                }
            }
        }
        keys
    }

    pub fn points_of(&self, key: RunKey) -> impl Iterator<Item = &RunPoint> {
        self.points.iter().filter(move |pt| pt.key() == key)
    }

    /// `<backend>-<variant>/p<N>_<policy>`, relative to the timestamp
    /// directory.
    pub fn run_dir(&self, key: RunKey) -> PathBuf {
        PathBuf::from(format!("{}-{}", key.backend, self.variants[key.variant].name))
            .join(format!("p{}_{}", key.p, self.test.allocation))
    }

    /// Keeps only the points of one run.
    pub fn restrict(&mut self, key: RunKey) {
        self.points.retain(|pt| pt.key() == key);
    }
}

impl RunPoint {
    pub fn key(&self) -> RunKey {
        RunKey {
            backend: self.backend,
            variant: self.variant,
            p: self.p,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CollectiveKind;
    use crate::orchestrator::config::Sweep;
    use crate::tracer::Topology;

    fn env() -> EnvConfig {
        EnvConfig::new("desk", Topology::new("t", 2, 2, 2), "results")
    }

    fn test(algs: &[&str], max: u64) -> TestConfig {
        let mut t = TestConfig::for_collective(CollectiveKind::Allreduce);
        t.algorithms = algs.iter().map(|s| s.to_string()).collect();
        t.sizes.max_bytes = max;
        t
    }

    #[test]
    fn cross_product_size_and_order() {
        let plan = plan_runs(&env(), &test(&["ring", "rabenseifner"], 4096)).unwrap();
        assert_eq!(plan.len(), 6);
        assert_eq!(plan.sizes, [1024, 2048, 4096]);
        let order: Vec<(&str, u64)> = plan.points.iter().map(|p| (p.algorithm.name(), p.msg_bytes)).collect();
        assert_eq!(order[0], ("ring", 1024));
        assert_eq!(order[3], ("rabenseifner", 1024));
        assert_eq!(plan.runs().len(), 1);
        assert_eq!(plan.run_dir(plan.runs()[0]), PathBuf::from("fabric-default/p4_block"));
    }

    #[test]
    fn sweeps_and_backends_multiply() {
        let mut t = test(&["ring", "rabenseifner"], 4096);
        for r in [2, 4] {
            t.sweeps.push(Sweep {
                name: format!("rails{r}"),
                set: ModelOverrides {
                    rails: Some(r),
                    ..Default::default()
                },
            });
        }
        let plan = plan_runs(&env(), &t).unwrap();
        assert_eq!(plan.len(), 12);
        assert_eq!(plan.variants[1].model.rails, 4);
        t.backend = Backend::Both;
        t.ranks = vec![2, 4];
        let plan = plan_runs(&env(), &t).unwrap();
        assert_eq!(plan.len(), 2 * 2 * 3 * 2 * 2);
        assert_eq!(plan.runs().len(), 2 * 2 * 2);
        assert_eq!(plan.runs()[0], RunKey { backend: Backend::Fabric, variant: 0, p: 2 });
    }

    #[test]
    fn inverted_size_range_is_an_error() {
        let mut t = test(&["ring"], 4096);
        t.sizes.min_bytes = 8192;
        assert!(matches!(plan_runs(&env(), &t), Err(Error::Config(_))));
    }
}
