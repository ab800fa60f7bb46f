//! Named random sub-streams.
//!
//! Every stochastic source in a replication draws from its own ChaCha stream,
//! all derived from one master seed. Two policies simulated with the same
//! master seed and replication index therefore see the same arrival sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Source {
    Arrivals = 0,
    Uploads = 1,
    Computation = 2,
    Policy = 3,
    Bookkeeping = 4,
}

const STREAMS_PER_REPLICATION: u64 = 8;

pub fn substream(master_seed: u64, replication: u64, source: Source) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication * STREAMS_PER_REPLICATION + source as u64);
    rng
}

#[derive(Clone, Debug)]
pub struct RandomStreams {
    pub arrivals: ChaCha8Rng,
    pub uploads: ChaCha8Rng,
    pub computation: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    /// Draws that never feed back into the dynamics (e.g. which in-flight
    /// job is the one that completed, for sojourn accounting).
    pub bookkeeping: ChaCha8Rng,
}

impl RandomStreams {
    pub fn new(master_seed: u64, replication: u64) -> Self {
        RandomStreams {
            arrivals: substream(master_seed, replication, Source::Arrivals),
            uploads: substream(master_seed, replication, Source::Uploads),
            computation: substream(master_seed, replication, Source::Computation),
            policy: substream(master_seed, replication, Source::Policy),
            bookkeeping: substream(master_seed, replication, Source::Bookkeeping),
        }
    }
}
