use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IclPlan, PipelineError, SpecialistSpec};
use crate::data::DatasetManifest;
use crate::icl::SelectionConfig;

pub const PROGRAM_VERSION: &str = "lensforge-program/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IclConfig {
    pub selection: SelectionConfig,
    pub plan: IclPlan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramSpecialist {
    #[serde(flatten)]
    pub spec: SpecialistSpec,
    pub instruction: String,
    pub icl: IclConfig,
    /// Set when compilation fell back to the seed instruction, zero-shot.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompiledProgram {
    pub version: String,
    pub m: usize,
    /// RFC 3339 creation time; not part of the program's identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    pub specialists: Vec<ProgramSpecialist>,
}

impl CompiledProgram {
    pub fn new(m: usize, specialists: Vec<ProgramSpecialist>) -> Self {
        Self {
            version: PROGRAM_VERSION.to_owned(),
            m,
            created: None,
            specialists,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.version != PROGRAM_VERSION {
            return Err(PipelineError::VersionMismatch {
                found: self.version.clone(),
                expected: PROGRAM_VERSION,
            });
        }
        if self.specialists.is_empty() {
            return Err(PipelineError::InvalidProgram("no specialists".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.specialists {
            s.spec.validate()?;
            if !seen.insert(s.spec.sublabel_id.as_str()) {
                return Err(PipelineError::InvalidProgram(format!(
                    "sublabel {:?} has two specialists",
                    s.spec.sublabel_id
                )));
            }
            if s.instruction.trim().is_empty() {
                return Err(PipelineError::InvalidProgram(format!(
                    "specialist {:?} has an empty instruction",
                    s.spec.sublabel_id
                )));
            }
            s.icl.selection.validate()?;
        }
        Ok(())
    }

    /// Checks the program against a manifest: one specialist per taxonomy
    /// sublabel and every demonstration image present.
    pub fn check_references(&self, manifest: &DatasetManifest) -> Result<(), PipelineError> {
        for sublabel in manifest.taxonomy.sublabels() {
            if !self.specialists.iter().any(|s| s.spec.sublabel_id == sublabel.id) {
                return Err(PipelineError::InvalidProgram(format!(
                    "no specialist for sublabel {:?}",
                    sublabel.id
                )));
            }
        }
        let ids: HashSet<&str> = manifest.records.iter().map(|r| r.id.as_str()).collect();
        for s in &self.specialists {
            if !manifest.taxonomy.contains(&s.spec.sublabel_id) {
                return Err(PipelineError::InvalidProgram(format!(
                    "specialist {:?} is not in the taxonomy",
                    s.spec.sublabel_id
                )));
            }
            if let Some(missing) = s.icl.plan.referenced_ids().into_iter().find(|id| !ids.contains(id)) {
                return Err(PipelineError::DanglingReference {
                    sublabel_id: s.spec.sublabel_id.clone(),
                    image_id: missing.to_owned(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("program serializes");
        text.push('\n');
        text
    }

    /// Serialized form without the creation time, for comparing runs.
    pub fn canonical_json(&self) -> String {
        Self {
            created: None,
            ..self.clone()
        }
        .to_json()
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let program: Self =
            serde_json::from_str(text).map_err(|e| PipelineError::InvalidProgram(e.to_string()))?;
        program.validate()?;
        Ok(program)
    }
}

pub fn save_program(program: &CompiledProgram, path: impl AsRef<Path>) -> Result<(), PipelineError> {
    let path = path.as_ref();
    fs::write(path, program.to_json()).map_err(|source| PipelineError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_program(path: impl AsRef<Path>) -> Result<CompiledProgram, PipelineError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_owned(),
        source,
    })?;
    CompiledProgram::from_json(&text)
}

/// [`load_program`] followed by [`CompiledProgram::check_references`].
pub fn load_program_checked(
    path: impl AsRef<Path>,
    manifest: &DatasetManifest,
) -> Result<CompiledProgram, PipelineError> {
    let program = load_program(path)?;
    program.check_references(manifest)?;
    Ok(program)
}
