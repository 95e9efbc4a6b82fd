//! Locate/answer instruction templates and the four-turn training conversation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roi::{encode_ans1, RoiBox, RoiError};

/// Placeholder for the full image.
pub const IMAGE_TOKEN: &str = "[IMAGE]";
/// Placeholder for the zoomed region-of-interest image.
pub const ROI_IMAGE_TOKEN: &str = "[ROI_IMAGE]";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("answer is empty")]
    EmptyAnswer,
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error("conversation violates placeholder rules: {0}")]
    Lint(String),
}

/// How the question text is spliced into a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuestionStyle {
    #[default]
    Verbatim,
    /// Wraps the question in literal square brackets.
    Bracketed,
}

impl QuestionStyle {
    fn render(self, question: &str) -> String {
        match self {
            QuestionStyle::Verbatim => question.to_owned(),
            QuestionStyle::Bracketed => format!("[{question}]"),
        }
    }
}

fn checked_question(question: &str) -> Result<&str, PromptError> {
    let q = question.trim();
    if q.is_empty() {
        Err(PromptError::EmptyQuestion)
    } else {
        Ok(q)
    }
}

/// Locate instruction for `question`.
pub fn build_inst1(question: &str) -> Result<String, PromptError> {
    build_inst1_with(question, QuestionStyle::Verbatim)
}

pub fn build_inst1_with(question: &str, style: QuestionStyle) -> Result<String, PromptError> {
    let q = style.render(checked_question(question)?);
    Ok(format!(
        "{IMAGE_TOKEN} To answer the question: {q}, where is the region of interest in the image?"
    ))
}

/// Answer instruction for `question`. The template's closing period is kept
/// even after a question mark.
pub fn build_inst2(question: &str) -> Result<String, PromptError> {
    build_inst2_with(question, QuestionStyle::Verbatim)
}

pub fn build_inst2_with(question: &str, style: QuestionStyle) -> Result<String, PromptError> {
    let q = style.render(checked_question(question)?);
    Ok(format!(
        "The region of interest in the image is {ROI_IMAGE_TOKEN}. Answer the question: {q}."
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub role: Role,
    pub content: String,
    /// Whether this turn's tokens contribute to the training loss.
    pub loss: bool,
}

/// User Inst.1, assistant box, user Inst.2, assistant answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Conversation {
    pub turns: Vec<Turn>,
}

impl Conversation {
    /// Loss flags in turn order.
    pub fn loss_mask(&self) -> Vec<bool> {
        self.turns.iter().map(|t| t.loss).collect()
    }

    /// Checks turn order, loss flags and placeholder placement.
    pub fn lint(&self) -> Result<(), PromptError> {
        const ROLES: [Role; 4] = [Role::User, Role::Assistant, Role::User, Role::Assistant];
        if self.turns.len() != 4 {
            return Err(PromptError::Lint(format!(
                "expected 4 turns, found {}",
                self.turns.len()
            )));
        }
        for (i, (turn, role)) in self.turns.iter().zip(ROLES).enumerate() {
            if turn.role != role {
                return Err(PromptError::Lint(format!(
                    "turn {i} has role {:?}",
                    turn.role
                )));
            }
            if turn.loss != (role == Role::Assistant) {
                return Err(PromptError::Lint(format!(
                    "turn {i} has loss={}",
                    turn.loss
                )));
            }
            if role == Role::Assistant
                && (turn.content.contains(IMAGE_TOKEN) || turn.content.contains(ROI_IMAGE_TOKEN))
            {
                return Err(PromptError::Lint(format!(
                    "assistant turn {i} contains an image placeholder"
                )));
            }
        }
        let joined: String = self
            .turns
            .iter()
            .map(|t| t.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        for token in [IMAGE_TOKEN, ROI_IMAGE_TOKEN] {
            let count = joined.matches(token).count();
            if count != 1 {
                return Err(PromptError::Lint(format!("{token} appears {count} times")));
            }
        }
        if joined.find(IMAGE_TOKEN) > joined.find(ROI_IMAGE_TOKEN) {
            return Err(PromptError::Lint(format!(
                "{ROI_IMAGE_TOKEN} precedes {IMAGE_TOKEN}"
            )));
        }
        Ok(())
    }
}

/// Assembles the training conversation for one question/answer pair and
/// its quantized ROI.
pub fn build_conversation(
    question: &str,
    roi: &RoiBox,
    answer: &str,
) -> Result<Conversation, PromptError> {
    if answer.trim().is_empty() {
        return Err(PromptError::EmptyAnswer);
    }
    let turn = |role, content, loss| Turn {
        role,
        content,
        loss,
    };
    let conversation = Conversation {
        turns: vec![
            turn(Role::User, build_inst1(question)?, false),
            turn(Role::Assistant, encode_ans1(roi)?, true),
            turn(Role::User, build_inst2(question)?, false),
            turn(Role::Assistant, answer.to_owned(), true),
        ],
    };
    conversation.lint()?;
    Ok(conversation)
}
