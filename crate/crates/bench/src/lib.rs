//! Fixtures shared by the criterion benches.

use cyclecancel::{generate, Family, FractionalAllocation, GenConfig, Instance};

/// Seeded mixed-family instance.
pub fn mixed_instance(agents: usize, goods: usize, seed: u64) -> Instance {
    generate(&GenConfig {
        family: Family::Mixed,
        agents,
        goods,
        seed,
        small_goods: None,
    })
    .expect("valid generator config")
}

/// Uniform point for `instance`.
pub fn uniform_point(instance: &Instance) -> FractionalAllocation {
    FractionalAllocation::uniform(instance.agents(), instance.goods()).expect("at least one agent")
}
