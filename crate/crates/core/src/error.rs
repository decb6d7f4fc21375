use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    EmptyTaxonomy,
    /// A malformed line in a line-oriented input; `line` is 1-based.
    Parse { line: usize, message: String },
    UnknownLabel(String),
    InvalidDocument {
        document: String,
        field: String,
        message: String,
    },
    InvalidTopic(String),
    EmptyWord,
    /// A binary problem without positive or without negative examples.
    DegenerateLabel(String),
    MissingClass(String),
    NonFiniteObjective,
    InvalidParameter(String),
    AllConfigurationsImpossible,
    NotADisagreement,
    MentionMismatch(String),
    NoPositiveGold,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyTaxonomy => f.write_str("empty taxonomy"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::UnknownLabel(label) => write!(f, "unknown label `{label}`"),
            Error::InvalidDocument {
                document,
                field,
                message,
            } => write!(f, "document `{document}`: field `{field}`: {message}"),
            Error::InvalidTopic(topic) => write!(f, "topic `{topic}` is not one of the eight fixed topics"),
            Error::EmptyWord => f.write_str("empty word"),
            Error::DegenerateLabel(what) => write!(f, "degenerate label: {what}"),
            Error::MissingClass(class) => write!(f, "no training instance for class `{class}`"),
            Error::NonFiniteObjective => f.write_str("objective is not finite"),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::AllConfigurationsImpossible => f.write_str("all configurations impossible"),
            Error::NotADisagreement => f.write_str("not a disagreement"),
            Error::MentionMismatch(id) => {
                write!(f, "mention `{id}` is not present in both prediction and gold streams")
            }
            Error::NoPositiveGold => f.write_str("no positive gold labels"),
        }
    }
}

impl core::error::Error for Error {}
