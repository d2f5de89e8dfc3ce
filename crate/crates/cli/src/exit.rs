//! Process exit codes.

use scorefuse::Error;

pub const OK: i32 = 0;
pub const OTHER: i32 = 1;
/// Bad command line; clap exits with this code itself.
pub const USAGE: i32 = 2;
pub const PARSE: i32 = 3;
pub const CONTRACT: i32 = 4;
pub const ALIGNMENT: i32 = 5;
pub const LEAKAGE: i32 = 6;
pub const IO: i32 = 7;

pub fn code_for(err: &Error) -> i32 {
    match err.root() {
        Error::Parse { .. } | Error::Range { .. } | Error::Duplicate { .. } | Error::Json { .. } => {
            PARSE
        }
        Error::Contract(_)
        | Error::Consistency(_)
        | Error::Lookup(_)
        | Error::Partition(_)
        | Error::Training(_)
        | Error::UnsupportedOracle(_)
        | Error::UndefinedEffect(_) => CONTRACT,
        Error::Alignment(_) => ALIGNMENT,
        Error::Leakage { .. } => LEAKAGE,
        Error::Io { .. } => IO,
        Error::Context { .. } => OTHER,
    }
}
