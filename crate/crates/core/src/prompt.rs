//! Prompt template assembly: role prefix, function descriptions, fixed
//! output format and few-shot examples, followed by the user instruction in
//! a sentinel-delimited block.
//!
//! Templates are data. The shipped default lives in `templates/default.toml`
//! and can be replaced at runtime with [`PromptTemplate::from_file`].

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::{self, Decision, ParseError, DECLINE_FUNCTION, REQUIRED_KEYS};

pub const TEMPLATE_VERSION: u32 = 1;
pub const INSTRUCTION_OPEN: &str = "<<<USER_INSTRUCTION>>>";
pub const INSTRUCTION_CLOSE: &str = "<<<END_USER_INSTRUCTION>>>";

const BUILTIN: &str = include_str!("../templates/default.toml");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("function `{0}` is already registered")]
    DuplicateFunction(String),
    #[error("function name must not be empty")]
    EmptyFunctionName,
    #[error("function `{0}` declares no parameters")]
    NoParameters(String),
    #[error("template declares no functions")]
    NoFunctions,
    #[error("output format never mentions required key `{0}`")]
    MissingFormatKey(&'static str),
    #[error("example {index} does not parse: {source}")]
    InvalidExample { index: usize, source: ParseError },
    #[error("example {index} uses undeclared function `{function}`")]
    UndeclaredExampleFunction { index: usize, function: String },
    #[error("function `{0}` has no few-shot example")]
    UncoveredFunction(String),
    #[error("unsupported template_version {0} (this build reads {TEMPLATE_VERSION})")]
    UnsupportedVersion(u32),
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("template file: {0}")]
    Format(String),
    #[error("template file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDescriptor {
    pub name: String,
    pub description: String,
    #[serde(rename = "parameters")]
    pub parameter_names: Vec<String>,
}

impl FunctionDescriptor {
    pub fn new(name: &str, description: &str, parameter_names: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            description: description.to_owned(),
            parameter_names: parameter_names.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Ordered set of functions, unique by name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctionRegistry {
    functions: Vec<FunctionDescriptor>,
}

impl FunctionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(mut self, descriptor: FunctionDescriptor) -> Result<Self, PromptError> {
        if descriptor.name.trim().is_empty() {
            return Err(PromptError::EmptyFunctionName);
        }
        if descriptor.parameter_names.is_empty() {
            return Err(PromptError::NoParameters(descriptor.name));
        }
        if self.contains(&descriptor.name) {
            return Err(PromptError::DuplicateFunction(descriptor.name));
        }
        self.functions.push(descriptor);
        Ok(self)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.functions.iter().any(|f| f.name == name)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FunctionDescriptor> {
        self.functions.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    #[serde(rename = "user")]
    pub user_instruction: String,
    #[serde(rename = "assistant")]
    pub expected_response: String,
}

#[derive(Deserialize)]
struct TemplateFile {
    template_version: u32,
    prefix: String,
    functions: Vec<FunctionDescriptor>,
    output_format: String,
    #[serde(default)]
    examples: Vec<FewShotExample>,
}

/// A validated template. Construction checks every invariant, so a value of
/// this type always renders a usable prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    prefix: String,
    functions: FunctionRegistry,
    output_format: String,
    examples: Vec<FewShotExample>,
}

impl PromptTemplate {
    pub fn new(
        prefix: impl Into<String>,
        functions: FunctionRegistry,
        output_format: impl Into<String>,
        examples: Vec<FewShotExample>,
    ) -> Result<Self, PromptError> {
        let template = Self {
            prefix: prefix.into(),
            functions,
            output_format: output_format.into(),
            examples,
        };
        template.validate()?;
        Ok(template)
    }

    /// The template compiled into this crate.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN).expect("builtin template is valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PromptError> {
        let file: TemplateFile =
            toml::from_str(text).map_err(|e| PromptError::Format(e.to_string()))?;
        if file.template_version != TEMPLATE_VERSION {
            return Err(PromptError::UnsupportedVersion(file.template_version));
        }
        let functions = file
            .functions
            .into_iter()
            .try_fold(FunctionRegistry::new(), FunctionRegistry::register)?;
        Self::new(file.prefix, functions, file.output_format, file.examples)
    }

    pub fn functions(&self) -> &FunctionRegistry {
        &self.functions
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }

    /// Returns a copy with one more function. The caller must also supply an
    /// example for it, so registration revalidates.
    pub fn with_function(
        &self,
        descriptor: FunctionDescriptor,
        example: FewShotExample,
    ) -> Result<Self, PromptError> {
        let mut examples = self.examples.clone();
        examples.push(example);
        Self::new(
            self.prefix.clone(),
            self.functions.clone().register(descriptor)?,
            self.output_format.clone(),
            examples,
        )
    }

    fn validate(&self) -> Result<(), PromptError> {
        if self.functions.is_empty() {
            return Err(PromptError::NoFunctions);
        }
        for key in REQUIRED_KEYS {
            if !self.output_format.contains(key) {
                return Err(PromptError::MissingFormatKey(key));
            }
        }
        let mut covered = Vec::new();
        for (index, example) in self.examples.iter().enumerate() {
            let function = match parser::parse_response(&example.expected_response)
                .map_err(|source| PromptError::InvalidExample { index, source })?
            {
                Decision::Invoke(inv) => inv.function().as_str().to_owned(),
                Decision::Decline { .. } => DECLINE_FUNCTION.to_owned(),
            };
            if !self.functions.contains(&function) {
                return Err(PromptError::UndeclaredExampleFunction { index, function });
            }
            covered.push(function);
        }
        if let Some(f) = self.functions.iter().find(|f| !covered.contains(&f.name)) {
            return Err(PromptError::UncoveredFunction(f.name.clone()));
        }
        Ok(())
    }

    /// Everything before the instruction block. Stable for a given template.
    pub fn render_preamble(&self) -> String {
        let mut out = String::new();
        out.push_str(self.prefix.trim());
        out.push_str("\n\n## Functions\n");
        for f in self.functions.iter() {
            let _ = writeln!(
                out,
                "- {}({}): {}",
                f.name,
                f.parameter_names.join(", "),
                f.description.trim()
            );
        }
        out.push_str("\n## Output format\n");
        out.push_str(self.output_format.trim());
        out.push_str("\n\n## Examples\n");
        for ex in &self.examples {
            let _ = write!(
                out,
                "User: {}\nAssistant: {}\n\n",
                ex.user_instruction.trim(),
                ex.expected_response.trim()
            );
        }
        out
    }

    /// Full prompt for one instruction. The instruction is inserted verbatim
    /// between [`INSTRUCTION_OPEN`] and [`INSTRUCTION_CLOSE`] lines.
    pub fn render(&self, user_instruction: &str) -> Result<String, PromptError> {
        if user_instruction.trim().is_empty() {
            return Err(PromptError::EmptyInstruction);
        }
        let mut out = self.render_preamble();
        let _ = write!(
            out,
            "{INSTRUCTION_OPEN}\n{user_instruction}\n{INSTRUCTION_CLOSE}\n"
        );
        Ok(out)
    }
}

pub fn render_prompt(
    template: &PromptTemplate,
    user_instruction: &str,
) -> Result<String, PromptError> {
    template.render(user_instruction)
}

/// Recovers the instruction from a rendered prompt: everything between the
/// first opening sentinel line and the last closing one.
pub fn extract_instruction(prompt: &str) -> Option<&str> {
    let open = format!("{INSTRUCTION_OPEN}\n");
    let close = format!("\n{INSTRUCTION_CLOSE}");
    let start = prompt.find(&open)? + open.len();
    let end = prompt.rfind(&close)?;
    (end >= start).then(|| &prompt[start..end])
}
