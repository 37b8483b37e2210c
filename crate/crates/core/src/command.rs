//! Primitive commands recorded by the memory model and charged by the cost
//! model.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Primitive operation kinds. Each maps to one cost-table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Activate,
    ReadRow,
    WriteRow,
    DwShift,
    Tr,
    Tw,
    BulkOp,
    PredReset,
    InterBankCopy,
    LogicalShiftWrite,
    AddSetup,
}

impl OpKind {
    pub const ALL: [OpKind; 11] = [
        OpKind::Activate,
        OpKind::ReadRow,
        OpKind::WriteRow,
        OpKind::DwShift,
        OpKind::Tr,
        OpKind::Tw,
        OpKind::BulkOp,
        OpKind::PredReset,
        OpKind::InterBankCopy,
        OpKind::LogicalShiftWrite,
        OpKind::AddSetup,
    ];

    /// Name of the cost-table entry for this kind.
    pub fn cost_key(self) -> &'static str {
        match self {
            OpKind::Activate => "activate",
            OpKind::ReadRow => "port_read",
            OpKind::WriteRow => "port_write",
            OpKind::DwShift => "dw_shift_per_domain",
            OpKind::Tr => "tr",
            OpKind::Tw => "tw",
            OpKind::BulkOp => "bulk_decode",
            OpKind::PredReset => "pred_reset",
            OpKind::InterBankCopy => "inter_bank_copy_per_row",
            OpKind::LogicalShiftWrite => "logical_shift_write",
            OpKind::AddSetup => "add_setup",
        }
    }

    pub fn from_cost_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.cost_key() == key)
    }

    /// Whether latency is multiplied by the command quantity.
    pub fn latency_scales(self) -> bool {
        matches!(self, OpKind::DwShift | OpKind::InterBankCopy)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One primitive event.
///
/// `quantity` is the shift distance for `DwShift`, the span width for
/// `Tr`, the staged operand count for `AddSetup`, the row count for
/// `InterBankCopy` and `1` otherwise. Energy always scales with it; latency
/// only for shifts and copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Command {
    pub kind: OpKind,
    pub quantity: u32,
    /// Row (or span base) the command addressed.
    pub row: u32,
}

impl Command {
    pub fn new(kind: OpKind, quantity: u32, row: usize) -> Self {
        Self { kind, quantity, row: row as u32 }
    }

    pub fn unit(kind: OpKind, row: usize) -> Self {
        Self::new(kind, 1, row)
    }
}
