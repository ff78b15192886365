use serde::{Deserialize, Serialize};

use super::SandboxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    FencedBlocks,
    WholeResponseFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedProgram {
    pub sample_id: String,
    pub source_text: String,
    pub extraction_mode: ExtractionMode,
    pub block_count: usize,
}

/// Pulls the program out of a model reply.
///
/// All triple-backtick blocks are joined in order with a newline; the info
/// string after the opening fence is ignored. An unterminated block runs to
/// the end of the reply. Replies without any non-empty block are taken whole.
pub fn extract_code(sample_id: &str, response_text: &str) -> Result<ExtractedProgram, SandboxError> {
    if response_text.trim().is_empty() {
        return Err(SandboxError::EmptyResponse);
    }
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in response_text.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match (&mut current, is_fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(_), true) => blocks.push(current.take().unwrap_or_default()),
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    if let Some(open) = current {
        blocks.push(open);
    }
    let source_text = blocks
        .iter()
        .map(|b| b.join("\n"))
        .collect::<Vec<_>>()
        .join("\n");
    if blocks.is_empty() || source_text.trim().is_empty() {
        return Ok(ExtractedProgram {
            sample_id: sample_id.to_string(),
            source_text: response_text.to_string(),
            extraction_mode: ExtractionMode::WholeResponseFallback,
            block_count: 0,
        });
    }
    Ok(ExtractedProgram {
        sample_id: sample_id.to_string(),
        source_text,
        extraction_mode: ExtractionMode::FencedBlocks,
        block_count: blocks.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block() {
        let p = extract_code("s", "Here:\n```python\nx = 1\n```\nDone.").unwrap();
        assert_eq!(p.source_text, "x = 1");
        assert_eq!(p.block_count, 1);
        assert_eq!(p.extraction_mode, ExtractionMode::FencedBlocks);
    }

    #[test]
    fn two_blocks_concatenate() {
        let p = extract_code("s", "```\na\n```\ntext\n```py\nb\n```").unwrap();
        assert_eq!(p.source_text, "a\nb");
        assert_eq!(p.block_count, 2);
    }

    #[test]
    fn fallback_without_fence() {
        let p = extract_code("s", "no code here, sorry").unwrap();
        assert_eq!(p.extraction_mode, ExtractionMode::WholeResponseFallback);
        assert_eq!(p.block_count, 0);
        assert_eq!(p.source_text, "no code here, sorry");
    }

    #[test]
    fn unterminated_and_empty() {
        let p = extract_code("s", "```python\nimport wave\nprint(1)").unwrap();
        assert_eq!(p.source_text, "import wave\nprint(1)");
        assert!(matches!(extract_code("s", "  \n"), Err(SandboxError::EmptyResponse)));
        let p = extract_code("s", "```\n```\nplain").unwrap();
        assert_eq!(p.extraction_mode, ExtractionMode::WholeResponseFallback);
    }
}
