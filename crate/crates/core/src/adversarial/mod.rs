//! The two players and the minmax training procedure.

pub mod convergence;
pub mod players;
pub mod training;

pub use convergence::{
    classify_convergence, Convergence, ConvergencePattern, ConvergenceTrace, EpochRecord,
};
pub use players::{build_real_fake, hidden_size, Discriminator, Generator, RealFakePair};
pub use training::{
    discriminator_update, generator_gradients, generator_update, likelihood_loss, mean_likelihood,
    train, DiscriminatorStep, Forward, GeneratorStep, GeneratorTerms, Mode, PairGradient,
    TrainError, TrainedModel, TrainingConfig,
};
