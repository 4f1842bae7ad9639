//! Versioned prompt resources.
//!
//! The instruction texts are part of the method, so they ship as files with
//! stable names and checksums; campaign manifests record the checksums so a
//! transcript can be tied to the exact prompt text that produced it.

/// One shipped instruction text.
#[derive(Debug, Clone, Copy)]
pub struct PromptResource {
    pub name: &'static str,
    pub version: &'static str,
    pub text: &'static str,
}

impl PromptResource {
    /// FNV-1a 64-bit checksum of the text, hex-encoded.
    pub fn checksum(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in self.text.as_bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("fnv1a64:{hash:016x}")
    }
}

/// Initial attacker system instructions.
pub const ATTACKER_INITIAL: PromptResource = PromptResource {
    name: "attacker_initial",
    version: "v1",
    text: include_str!("../resources/attacker_initial_v1.txt"),
};

/// Prompt-optimizer system instructions (fixed across iterations).
pub const OPTIMIZER_SYSTEM: PromptResource = PromptResource {
    name: "optimizer_system",
    version: "v1",
    text: include_str!("../resources/optimizer_system_v1.txt"),
};

/// Semantic-equivalence judge instructions.
pub const JUDGE_SEMANTIC: PromptResource = PromptResource {
    name: "judge_semantic",
    version: "v1",
    text: include_str!("../resources/judge_semantic_v1.txt"),
};

/// Coherence judge instructions.
pub const JUDGE_COHERENCE: PromptResource = PromptResource {
    name: "judge_coherence",
    version: "v1",
    text: include_str!("../resources/judge_coherence_v1.txt"),
};

/// Simplification-defense system instructions.
pub const DEFENSE_SIMPLIFY: PromptResource = PromptResource {
    name: "defense_simplify",
    version: "v1",
    text: include_str!("../resources/defense_simplify_v1.txt"),
};

pub fn all() -> [&'static PromptResource; 5] {
    [&ATTACKER_INITIAL, &OPTIMIZER_SYSTEM, &JUDGE_SEMANTIC, &JUDGE_COHERENCE, &DEFENSE_SIMPLIFY]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resources_are_non_empty_and_distinct() {
        let checksums: Vec<String> = all().iter().map(|r| r.checksum()).collect();
        for (r, c) in all().iter().zip(&checksums) {
            assert!(!r.text.trim().is_empty(), "{} is empty", r.name);
            assert!(c.starts_with("fnv1a64:"));
        }
        let unique: std::collections::BTreeSet<_> = checksums.iter().collect();
        assert_eq!(unique.len(), checksums.len());
    }

    #[test]
    fn checksum_is_stable() {
        let a = ATTACKER_INITIAL.checksum();
        let b = ATTACKER_INITIAL.checksum();
        assert_eq!(a, b);
    }

    #[test]
    fn optimizer_prompt_names_the_output_fields() {
        assert!(OPTIMIZER_SYSTEM.text.contains("\"system_prompt\""));
        assert!(OPTIMIZER_SYSTEM.text.contains("\"closest_success\""));
    }
}
