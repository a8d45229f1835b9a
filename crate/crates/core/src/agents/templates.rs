use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::AgentError;

/// Agent roles. Each rendered system text starts with `ROLE: <name>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Specialist,
    SensitivityImprover,
    SpecificityImprover,
    SensitivitySummarizer,
    SpecificitySummarizer,
    Guiding,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Specialist,
        Role::SensitivityImprover,
        Role::SpecificityImprover,
        Role::SensitivitySummarizer,
        Role::SpecificitySummarizer,
        Role::Guiding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::Specialist => "specialist",
            Role::SensitivityImprover => "sensitivity_improver",
            Role::SpecificityImprover => "specificity_improver",
            Role::SensitivitySummarizer => "sensitivity_summarizer",
            Role::SpecificitySummarizer => "specificity_summarizer",
            Role::Guiding => "guiding",
        }
    }

    /// Reads the role marker from the first line of a system text.
    pub fn from_system_text(system_text: &str) -> Option<Role> {
        let first = system_text.lines().next()?.trim();
        first.strip_prefix(ROLE_PREFIX)?.trim().parse().ok()
    }
}

pub const ROLE_PREFIX: &str = "ROLE:";

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleTemplate {
    pub system: String,
    pub user: String,
}

/// Role prompt templates with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    roles: HashMap<Role, RoleTemplate>,
}

macro_rules! builtin {
    ($name:literal) => {
        RoleTemplate {
            system: include_str!(concat!("../../templates/", $name, ".system.txt")).to_string(),
            user: include_str!(concat!("../../templates/", $name, ".user.txt")).to_string(),
        }
    };
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    /// The templates shipped in `templates/`.
    pub fn builtin() -> Self {
        let roles = HashMap::from([
            (Role::Specialist, builtin!("specialist")),
            (Role::SensitivityImprover, builtin!("sensitivity_improver")),
            (Role::SpecificityImprover, builtin!("specificity_improver")),
            (Role::SensitivitySummarizer, builtin!("sensitivity_summarizer")),
            (Role::SpecificitySummarizer, builtin!("specificity_summarizer")),
            (Role::Guiding, builtin!("guiding")),
        ]);
        Self { roles }
    }

    /// Builtins overridden by any `<role>.system.txt` / `<role>.user.txt` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, AgentError> {
        let mut templates = Self::builtin();
        for role in Role::ALL {
            let entry = templates.roles.get_mut(&role).expect("builtin covers every role");
            for (suffix, slot) in [("system", &mut entry.system), ("user", &mut entry.user)] {
                let path = dir.join(format!("{}.{suffix}.txt", role.name()));
                if path.exists() {
                    *slot = fs::read_to_string(&path)
                        .map_err(|e| AgentError::Template(format!("{}: {e}", path.display())))?;
                }
            }
            if Role::from_system_text(&entry.system) != Some(role) {
                return Err(AgentError::Template(format!(
                    "{} system template must start with `{ROLE_PREFIX} {}`",
                    role.name(),
                    role.name()
                )));
            }
        }
        Ok(templates)
    }

    pub fn get(&self, role: Role) -> &RoleTemplate {
        &self.roles[&role]
    }

    /// Renders (system, user) for `role`.
    pub fn render(&self, role: Role, vars: &[(&str, &str)]) -> (String, String) {
        let t = self.get(role);
        (fill(&t.system, vars), fill(&t.user, vars))
    }
}

/// Single-pass placeholder substitution: inserted values are never rescanned,
/// and unknown `{...}` sequences are left untouched.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let name = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (close, *v))
        });
        match replaced {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
