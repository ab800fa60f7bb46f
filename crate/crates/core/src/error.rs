use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("successor enumeration has {support} states, above the cap of {cap}")]
    EnumerationTooLarge { support: usize, cap: usize },

    #[error("state space has {} states, above the cap of {cap}", fmt_count(.count))]
    StateSpaceTooLarge { count: u128, cap: u128 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_count(count: &u128) -> String {
    if *count == u128::MAX {
        "more than 3.4e38".to_string()
    } else {
        count.to_string()
    }
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
