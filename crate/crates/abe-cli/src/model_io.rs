use std::path::Path;

use abe_core::regressor::{RegressorModel, FORMAT_VERSION};

use crate::error::{CliError, Result};

pub fn save_model(path: &Path, model: &RegressorModel) -> Result<()> {
    let mut text = serde_json::to_string_pretty(model).map_err(|e| CliError::format(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<RegressorModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(CliError::format(
                path,
                format!("model format version {v} is not supported (expected {FORMAT_VERSION})"),
            ))
        }
        None => return Err(CliError::format(path, "not a model file (no format_version)")),
    }
    let model: RegressorModel = serde_json::from_value(value).map_err(|e| CliError::format(path, e))?;
    model.validate().map_err(|e| CliError::format(path, e))?;
    Ok(model)
}
