//! Dataset generators and evaluation metrics: softened-gravity N-body
//! trajectories and the Broken Snake connectivity task.

mod jsonl;
mod metrics;
mod nbody;
mod snake;

pub use jsonl::{read_jsonl, to_jsonl_line, write_jsonl};
pub use metrics::mcc;
pub use nbody::{
    energy_drift, generate_nbody, integrate, kinetic_energy, potential_energy, rk4_integrate,
    total_energy, Body, Frame, NBodyConfig, NBodyDataset, Trajectory,
};
pub use snake::{
    gen_snake, gen_snake_dataset, snake_connectivity_algebraic, SnakeLabel, SnakeSample,
};
