use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} outside the supported range [3, 2^61)")]
    Overflow(u64),
    #[error("0 has no multiplicative inverse")]
    NoInverse,
    #[error("{what} = {value} exceeds the cap {cap}")]
    TooLarge {
        what: &'static str,
        value: u64,
        cap: u64,
    },
    #[error("{what} = {value} is out of range")]
    OutOfRange { what: &'static str, value: u64 },
    #[error("{e} does not divide {modulus_minus_one}")]
    NotDividing { e: u64, modulus_minus_one: u64 },
    #[error("query {0} is forbidden for this oracle")]
    ForbiddenInput(u64),
    #[error("exponent {exp} is not coprime to the group order {order}")]
    NotCoprime { exp: u64, order: u64 },
    #[error("{0} is not in the subgroup")]
    NotInSubgroup(u64),
    #[error("witness {0} does not have the required nonresidue property")]
    BadWitness(u64),
    #[error("no usable witness for the prime {0}")]
    IncompleteWitnesses(u64),
    #[error("expected {expected} answers, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("argument must be nonzero")]
    ZeroArgument,
    #[error("narrowing stalled at window {window} with {candidates} candidates")]
    Stalled { window: u64, candidates: usize },
    #[error("no candidate is consistent with the oracle answers")]
    InconsistentAnswers,
    #[error("p = {0} is too large for a full scan of the field")]
    TooLargeForScan(u64),
    #[error("e = {e} exceeds (p-1)/2 for p = {p}")]
    RangeViolation { p: u64, e: u64 },
    #[error("oracles disagree on (p, e)")]
    MismatchedParams,
    #[error("v must be invertible modulo p")]
    BadV,
    #[error("shift (lambda, mu) = ({0}, {1}) is degenerate")]
    DegenerateShift(u64, u64),
    #[error("s and t must differ")]
    DegeneratePair,
    #[error("set of size {size} is below the threshold {threshold:.1}")]
    TooSmall { size: usize, threshold: f64 },
    #[error("the principal character is not allowed here")]
    PrincipalCharacter,
}
