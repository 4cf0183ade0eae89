use std::sync::LazyLock;

use regex::Regex;

pub const SINGLE_SUBLABEL_TEMPLATE: &str = "In this generated image, return {label_name}=1 if you see a human with {description}, otherwise return {label_name}=0.";

/// One VLM covering the whole taxonomy; `{description_list}` is the
/// comma-separated sublabel descriptions.
pub const MULTI_SUBLABEL_TEMPLATE: &str = "In this image, return {label_name}=1 if you see any of these human artifacts: {description_list}, otherwise return {label_name}=0.";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template has no {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("unresolved placeholder {0} in rendered prompt")]
    Unresolved(String),
    #[error("instruction is empty")]
    Empty,
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{[A-Za-z_][A-Za-z0-9_]*\}").unwrap());

/// Substitutes `{label_name}` and `{description}` (or `{description_list}`).
pub fn render_prompt(template: &str, label_name: &str, description: &str) -> Result<String, PromptError> {
    if !template.contains("{label_name}") {
        return Err(PromptError::MissingPlaceholder("{label_name}"));
    }
    let slot = if template.contains("{description}") {
        "{description}"
    } else if template.contains("{description_list}") {
        "{description_list}"
    } else {
        return Err(PromptError::MissingPlaceholder("{description}"));
    };
    let rendered = template.replace("{label_name}", label_name).replace(slot, description);
    if let Some(m) = PLACEHOLDER.find(&rendered) {
        return Err(PromptError::Unresolved(m.as_str().to_owned()));
    }
    Ok(rendered)
}

pub fn render_multi_prompt(label_name: &str, descriptions: &[&str]) -> Result<String, PromptError> {
    render_prompt(MULTI_SUBLABEL_TEMPLATE, label_name, &descriptions.join(", "))
}

/// Instruction text for a prompt source. Compiled instructions are used as
/// they are; only templates are rendered.
pub fn resolve_instruction(
    instruction: &str,
    label_name: &str,
    description: &str,
) -> Result<String, PromptError> {
    if instruction.trim().is_empty() {
        return Err(PromptError::Empty);
    }
    if instruction.contains("{label_name}") {
        render_prompt(instruction, label_name, description)
    } else {
        Ok(instruction.to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_template() {
        let got = render_prompt(SINGLE_SUBLABEL_TEMPLATE, "extra_hand", "an extra hand").unwrap();
        assert_eq!(
            got,
            "In this generated image, return extra_hand=1 if you see a human with an extra hand, otherwise return extra_hand=0."
        );
    }

    #[test]
    fn multi_template() {
        let got = render_multi_prompt("artifact", &["a deformed hand", "a deformed face"]).unwrap();
        assert_eq!(
            got,
            "In this image, return artifact=1 if you see any of these human artifacts: a deformed hand, a deformed face, otherwise return artifact=0."
        );
    }

    #[test]
    fn template_errors() {
        assert_eq!(
            render_prompt("return {label_name}=1", "x", "d"),
            Err(PromptError::MissingPlaceholder("{description}"))
        );
        assert_eq!(
            render_prompt("{label_name} {description} {extra}", "x", "d"),
            Err(PromptError::Unresolved("{extra}".into()))
        );
    }

    #[test]
    fn compiled_text_passes_through() {
        let text = "Flag any deformed hand with at least 20% confidence.";
        assert_eq!(resolve_instruction(text, "deformed_hand", "d").unwrap(), text);
        assert_eq!(resolve_instruction("  ", "x", "d"), Err(PromptError::Empty));
    }
}
