//! Random trees, stable variates and spinal-decomposition samplers.

pub mod excursion;
pub mod gw;
pub mod inversion;
pub mod stable;

pub use excursion::{brownian_excursion, ExcursionOptions};
pub use gw::{gw_offspring, gw_time_step, gw_tree_coding, GwOptions, Offspring};
pub use inversion::{sample_level_mass_atom, CdfTable, LevelAtomSampler, Tail};
pub use stable::{positive_stable, sibuya, spectrally_positive_stable, stable_subordinator};
pub mod spinal;
pub use spinal::{
    mass_shell_schemes, spinal_draw, spinal_level_ball, spinal_mass_ball, spinal_mass_shells,
    write_spinal_csv, MassScheme, SpinalDraw, SpinalSampler,
};
