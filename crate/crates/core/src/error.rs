use thiserror::Error;

use crate::command::OpKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("port {port} does not exist")]
    InvalidPort { port: usize },
    #[error("shifting {requested} domain(s) would push data off the wire ({available} overhead domain(s) left)")]
    ShiftOverflow { requested: usize, available: usize },
    #[error("TR span of {width} domains exceeds the maximum TR distance {trd}")]
    SpanTooWide { width: usize, trd: usize },
    #[error("TR span [{first}, {first}+{width}) lies outside the wire")]
    SpanOutOfBounds { first: usize, width: usize },
    #[error("TR segments overlap")]
    OverlappingSegments,
    #[error("domain {position} is an overhead domain and cannot be written")]
    OverheadAccess { position: usize },
    #[error("ones count {count} outside 0..={max}")]
    CountOutOfRange { count: u32, max: u32 },
    #[error("operand count {0} not supported by the sense logic")]
    OperandCountOutOfRange(usize),
    #[error("row address {addr} out of range (rows = {rows})")]
    AddressOutOfRange { addr: usize, rows: usize },
    #[error("row width {got} does not match the cluster width {expected}")]
    RowWidthMismatch { expected: usize, got: usize },
    #[error("{got} operands requested, at most {max} supported")]
    TooManyOperands { got: usize, max: usize },
    #[error("row {addr} is not inside the TR span")]
    OperandsNotInSpan { addr: usize },
    #[error("span row {row} must be zero-filled")]
    SpanNotClear { row: usize },
    #[error("carry columns of the span must be zero before an addition")]
    EdgeColumnsNotZero,
    #[error("width overflow: {0}")]
    WidthOverflow(String),
    #[error("row buffer holds no valid data")]
    BufferInvalid,
    #[error("scratch cluster unavailable: {0}")]
    ScratchUnavailable(String),
    #[error("target is not a PIM-enabled tile: {0}")]
    NonPimTarget(String),
    #[error("address out of range: {0}")]
    OutOfRange(String),
    #[error("SIMD targets diverged in their command streams")]
    SimdDivergence,
    #[error("no cost entry for {0:?}")]
    MissingCostEntry(OpKind),
    #[error("no area entry `{0}`")]
    MissingAreaEntry(String),
    #[error("calibration mismatch:\n{0}")]
    CalibrationMismatch(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
