//! Named random substreams derived from one root seed.
//!
//! Every consumer of randomness (environment, parameter init, exploration,
//! replay sampling, evaluation) draws from its own ChaCha stream so that
//! changing how often one of them is used never shifts the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Env,
    Init,
    Exploration,
    Sampling,
    Evaluation,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Env => 1,
            Stream::Init => 2,
            Stream::Exploration => 3,
            Stream::Sampling => 4,
            Stream::Evaluation => 5,
        }
    }
}

/// Root seed that hands out independent substreams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn stream(&self, stream: Stream) -> Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(stream.id());
        rng
    }
}
