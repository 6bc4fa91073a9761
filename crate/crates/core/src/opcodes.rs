//! Opcode classification for Scratch 3 blocks.
//!
//! The table lives in `data/opcodes.txt` and is compiled into the binary. It
//! assigns every known opcode a [`BlockKind`] and a short human-readable alias
//! used in reports ("move steps" for `motion_movesteps`).

use std::collections::HashMap;
use std::sync::LazyLock;

const TABLE_SOURCE: &str = include_str!("../data/opcodes.txt");

/// Structural role of a block, derived from its opcode alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    Hat,
    Command,
    ControlIfThen,
    ControlIfElse,
    ControlForever,
    ControlLoopBounded,
    ControlLoopUntil,
    Cap,
    Reporter,
    Unknown,
}

impl BlockKind {
    fn from_token(token: &str) -> Option<Self> {
        Some(match token {
            "hat" => BlockKind::Hat,
            "command" => BlockKind::Command,
            "cap" => BlockKind::Cap,
            "if-then" => BlockKind::ControlIfThen,
            "if-else" => BlockKind::ControlIfElse,
            "forever" => BlockKind::ControlForever,
            "loop-bounded" => BlockKind::ControlLoopBounded,
            "loop-until" => BlockKind::ControlLoopUntil,
            "reporter" => BlockKind::Reporter,
            _ => return None,
        })
    }

    /// Number of substack (C-mouth) slots a block of this kind owns.
    pub fn substack_slots(self) -> usize {
        match self {
            BlockKind::ControlIfElse => 2,
            BlockKind::ControlIfThen
            | BlockKind::ControlForever
            | BlockKind::ControlLoopBounded
            | BlockKind::ControlLoopUntil => 1,
            _ => 0,
        }
    }

    /// Kind of a block met in a next-chain: unknown opcodes act as commands.
    pub fn in_stack(self) -> Self {
        match self {
            BlockKind::Unknown => BlockKind::Command,
            other => other,
        }
    }

    /// Kind of a block met only in input position: unknown opcodes act as reporters.
    pub fn in_input(self) -> Self {
        match self {
            BlockKind::Unknown => BlockKind::Reporter,
            other => other,
        }
    }
}

#[derive(Debug)]
pub struct OpcodeEntry {
    pub kind: BlockKind,
    pub alias: String,
}

#[derive(Debug)]
pub struct OpcodeTable {
    pub version: u32,
    entries: HashMap<String, OpcodeEntry>,
}

impl OpcodeTable {
    fn parse(source: &str) -> Self {
        let mut version = 0;
        let mut entries = HashMap::new();
        for (lineno, line) in source.lines().enumerate() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("format-version:") {
                    version = v.trim().parse().expect("opcode table version");
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(kind), Some(opcode)) = (parts.next(), parts.next()) else {
                panic!("opcode table line {}: expected `<kind> <opcode> <alias>`", lineno + 1);
            };
            let kind = BlockKind::from_token(kind)
                .unwrap_or_else(|| panic!("opcode table line {}: bad kind `{kind}`", lineno + 1));
            let alias = parts.collect::<Vec<_>>().join(" ");
            let alias = if alias.is_empty() { opcode.to_string() } else { alias };
            let previous = entries.insert(opcode.to_string(), OpcodeEntry { kind, alias });
            assert!(previous.is_none(), "opcode table: duplicate opcode `{opcode}`");
        }
        OpcodeTable { version, entries }
    }

    pub fn get(&self, opcode: &str) -> Option<&OpcodeEntry> {
        self.entries.get(opcode)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &OpcodeEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

static TABLE: LazyLock<OpcodeTable> = LazyLock::new(|| OpcodeTable::parse(TABLE_SOURCE));

/// The shipped classification table.
pub fn table() -> &'static OpcodeTable {
    &TABLE
}

/// Classifies an opcode. Total: opcodes absent from the table are `Unknown`.
pub fn classify_opcode(opcode: &str) -> BlockKind {
    TABLE.get(opcode).map_or(BlockKind::Unknown, |e| e.kind)
}

/// Display alias for an opcode, falling back to the opcode itself.
pub fn alias(opcode: &str) -> &str {
    TABLE.get(opcode).map_or(opcode, |e| e.alias.as_str())
}
