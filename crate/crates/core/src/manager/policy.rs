use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::registry::{ToolCategory, ToolSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApprovalMode {
    /// Every call runs without asking.
    #[default]
    Auto,
    /// Calls to approval-required tools wait for a human decision.
    Gated,
}

/// When a tool call must wait for a human decision.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalPolicy {
    pub mode: ApprovalMode,
    /// Per-category replacement for the tool's own `approval_required` flag.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<ToolCategory, bool>,
}

impl ApprovalPolicy {
    pub fn auto() -> Self {
        Self::default()
    }

    pub fn gated() -> Self {
        Self {
            mode: ApprovalMode::Gated,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, category: ToolCategory, required: bool) -> Self {
        self.overrides.insert(category, required);
        self
    }

    pub fn requires_approval(&self, spec: &ToolSpec) -> bool {
        self.mode == ApprovalMode::Gated
            && self
                .overrides
                .get(&spec.category)
                .copied()
                .unwrap_or(spec.approval_required)
    }

    /// Names of the tools this policy holds for a decision.
    pub fn gated_tools(&self, tools: &[ToolSpec]) -> HashSet<String> {
        tools
            .iter()
            .filter(|t| self.requires_approval(t))
            .map(|t| t.name.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_only_when_gated() {
        let write = ToolSpec::new("write_x", ToolCategory::Io, "writes").needs_approval();
        let read = ToolSpec::new("read_x", ToolCategory::Vision, "reads");
        assert!(!ApprovalPolicy::auto().requires_approval(&write));
        let gated = ApprovalPolicy::gated();
        assert!(gated.requires_approval(&write));
        assert!(!gated.requires_approval(&read));
        let relaxed = ApprovalPolicy::gated()
            .with_override(ToolCategory::Io, false)
            .with_override(ToolCategory::Vision, true);
        assert!(!relaxed.requires_approval(&write));
        assert!(relaxed.requires_approval(&read));
    }
}
