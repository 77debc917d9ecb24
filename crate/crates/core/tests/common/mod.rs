#![allow(dead_code)]

use std::sync::OnceLock;

use goblend::env::RacingEnv;
use goblend::persona::{cluster_dataset, ClusterConfig, Clustering};
use goblend::trace::{generate_cohort, Dataset, GeneratorConfig};

pub struct Cohort {
    pub env: RacingEnv,
    pub data: Dataset,
    pub clustering: Clustering,
}

/// Default cohort and its clustering, built once per test binary.
pub fn cohort() -> &'static Cohort {
    static COHORT: OnceLock<Cohort> = OnceLock::new();
    COHORT.get_or_init(|| {
        let env = RacingEnv::with_default_track();
        let data = generate_cohort(&env, &GeneratorConfig::default()).unwrap();
        let clustering = cluster_dataset(&data, &ClusterConfig::default()).unwrap();
        Cohort { env, data, clustering }
    })
}
