use super::DirectiveKind;

/// Line a critique model emits when an error is noise rather than a fixable gap.
pub const NON_ACTIONABLE_MARKER: &str = "NO_ACTIONABLE_CRITIQUE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerParse {
    /// Exactly `yes` or `no`.
    Clean(u8),
    /// Leading yes/no after lowercasing and stripping punctuation.
    Normalized(u8),
    Ambiguous,
}

pub fn parse_answer(raw: &str) -> AnswerParse {
    match raw.trim() {
        "yes" => return AnswerParse::Clean(1),
        "no" => return AnswerParse::Clean(0),
        _ => {}
    }
    let lowered = raw.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    match cleaned.split_whitespace().next() {
        Some("yes") => AnswerParse::Normalized(1),
        Some("no") => AnswerParse::Normalized(0),
        _ => AnswerParse::Ambiguous,
    }
}

/// Reads `DIRECTIVE: <kind>` / `GUIDANCE: <text>`. A response without a
/// directive line is taken as free-text rewrite guidance. `None` when empty.
pub fn parse_directive(raw: &str) -> Option<(DirectiveKind, String)> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    let mut kind = None;
    let mut guidance: Vec<&str> = Vec::new();
    let mut in_guidance = false;
    for line in raw.lines() {
        let trimmed = line.trim();
        if let Some(k) = trimmed.strip_prefix("DIRECTIVE:") {
            kind = match k.trim().to_lowercase().as_str() {
                "switch_target_metric" => Some(DirectiveKind::SwitchTargetMetric),
                "rewrite_strategy" => Some(DirectiveKind::RewriteStrategy),
                _ => None,
            };
            in_guidance = false;
        } else if let Some(g) = trimmed.strip_prefix("GUIDANCE:") {
            guidance.push(g.trim());
            in_guidance = true;
        } else if in_guidance {
            guidance.push(trimmed);
        }
    }
    match kind {
        Some(k) => {
            let text = guidance.join("\n").trim().to_string();
            let text = if text.is_empty() { raw.to_string() } else { text };
            Some((k, text))
        }
        None => Some((DirectiveKind::RewriteStrategy, raw.to_string())),
    }
}
