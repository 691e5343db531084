//! Queries, approach prompts, fine-tuning targets and token budgets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scene::{GridCoord, ObjectSpec};

/// Query used for real images, where masks carry no class labels.
pub const REAL_WORLD_QUERY: &str = "How many objects are there?";

pub const DC_PROMPT: &str = "Answer using as few words as possible.";

pub const PTC_PROMPT: &str = "Count the object(s) in the image. First generate the object's location(s) \
(returning a pair of (x, y) coordinates between 0 and 100), then return the total number of objects. \
Only answer with \"Coordinates: ... Answer:\".";

/// Point-then-count prompt for models trained to point natively.
pub const PTC_POINTING_PROMPT: &str = "Count by pointing.";

pub const LTC_PROMPT: &str = "You are given an image.\n\
\n\
1. First, list all instances of the object mentioned in the question as a numbered list. \
Each list item must contain a brief identifier (e.g., position or distinguishing detail).\n\
\n\
2. Then, count the number of listed items.\n\
\n\
3. Finally, provide the final answer within <answer></answer>. The answer must match the number of listed items.\n\
\n\
Output format:\n\
<list>\n\
1.\n\
2.\n\
</list>\n\
<answer>N</answer>\n\
\n\
Question:";

pub const REASONING_PROMPT: &str = "Only answer with the numerical value.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    /// Direct counting.
    Dc,
    /// Point, then state the count.
    Ptc,
    /// Point; the answer is the number of emitted coordinates.
    CoordCount,
    /// List instances, then count.
    Ltc,
    Reasoning,
}

impl Approach {
    pub const ALL: [Approach; 5] = [Approach::Dc, Approach::Ptc, Approach::CoordCount, Approach::Ltc, Approach::Reasoning];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Dc => "dc",
            Approach::Ptc => "ptc",
            Approach::CoordCount => "coordcount",
            Approach::Ltc => "ltc",
            Approach::Reasoning => "reasoning",
        }
    }

    /// Whether responses carry coordinates that can be scored for grounding.
    pub fn points(self) -> bool {
        matches!(self, Approach::Ptc | Approach::CoordCount)
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownApproach(pub String);

impl fmt::Display for UnknownApproach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown approach `{}` (expected dc, ptc, coordcount, ltc or reasoning)", self.0)
    }
}

impl core::error::Error for UnknownApproach {}

impl FromStr for Approach {
    type Err = UnknownApproach;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(Approach::Dc),
            "ptc" => Ok(Approach::Ptc),
            "coordcount" | "coord" | "#coord" | "coords" => Ok(Approach::CoordCount),
            "ltc" => Ok(Approach::Ltc),
            "reasoning" => Ok(Approach::Reasoning),
            _ => Err(UnknownApproach(s.into())),
        }
    }
}

/// `How many <color> <shape>s are there?`, with an explicit plural table.
pub fn query_for(object: ObjectSpec) -> String {
    format!("How many {} {} are there?", object.color.name(), object.shape.plural())
}

/// Instruction text for a training-free approach.
pub fn approach_prompt(approach: Approach) -> &'static str {
    match approach {
        Approach::Dc => DC_PROMPT,
        Approach::Ptc | Approach::CoordCount => PTC_PROMPT,
        Approach::Ltc => LTC_PROMPT,
        Approach::Reasoning => REASONING_PROMPT,
    }
}

/// Full user-turn text for a training-free approach: the list template ends
/// with `Question:` so the query follows it; the others append the instruction
/// after the query.
pub fn compose_prompt(approach: Approach, query: &str) -> String {
    match approach {
        Approach::Ltc => format!("{LTC_PROMPT} {query}"),
        _ => format!("{query} {}", approach_prompt(approach)),
    }
}

/// Maximum new tokens per approach.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationBudget {
    pub dc_finetuned: u32,
    pub ptc_finetuned: u32,
    pub dc_training_free: u32,
    pub ptc_training_free: u32,
    pub ltc: u32,
    pub reasoning: u32,
}

impl GenerationBudget {
    pub const STANDARD: GenerationBudget = GenerationBudget {
        dc_finetuned: 5,
        ptc_finetuned: 1_000,
        dc_training_free: 16,
        ptc_training_free: 3_000,
        ltc: 3_000,
        reasoning: 32_768,
    };

    pub fn max_new_tokens(&self, approach: Approach, finetuned: bool) -> u32 {
        match (approach, finetuned) {
            (Approach::Dc, true) => self.dc_finetuned,
            (Approach::Dc, false) => self.dc_training_free,
            (Approach::Ptc | Approach::CoordCount, true) => self.ptc_finetuned,
            (Approach::Ptc | Approach::CoordCount, false) => self.ptc_training_free,
            (Approach::Ltc, _) => self.ltc,
            (Approach::Reasoning, _) => self.reasoning,
        }
    }
}

impl Default for GenerationBudget {
    fn default() -> Self {
        GenerationBudget::STANDARD
    }
}

/// Fine-tuning target flavor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    Dc,
    Ptc,
    /// Point-then-count skeleton with each coordinate replaced by `X`.
    Xft,
}

impl FromStr for TargetMode {
    type Err = UnknownApproach;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(TargetMode::Dc),
            "ptc" => Ok(TargetMode::Ptc),
            "xft" => Ok(TargetMode::Xft),
            _ => Err(UnknownApproach(s.into())),
        }
    }
}

/// `Coordinates: (r, c), .... Answer:` with cells sorted row-major; the
/// prefix shared by point-then-count targets and prefill prompts.
pub fn coordinates_prefix(cells: &[GridCoord]) -> String {
    let mut sorted: Vec<GridCoord> = cells.to_vec();
    sorted.sort_unstable();
    let list: Vec<String> = sorted.iter().map(|c| format!("({}, {})", c.row, c.col)).collect();
    format!("Coordinates: {}. Answer:", list.join(", "))
}

/// Training target for a sample with ground-truth `cells` and count `label`.
pub fn ft_target(cells: &[GridCoord], label: usize, mode: TargetMode) -> String {
    match mode {
        TargetMode::Dc => format!("{label}"),
        TargetMode::Ptc => format!("{} {label}", coordinates_prefix(cells)),
        TargetMode::Xft => {
            let xs: Vec<&str> = cells.iter().map(|_| "X").collect();
            format!("Coordinates: {}. Answer: {label}", xs.join(", "))
        }
    }
}
