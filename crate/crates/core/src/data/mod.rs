//! Subjects, cohorts, and the cleaning/encoding pipeline that produces a
//! model-ready [`DesignMatrix`].

mod clean;
mod encode;
mod load;
mod split;
mod subject;

pub use clean::{clean_cohort, CleaningReport, CleaningRules, Removal, COLUMN_ROW_ID};
pub use encode::{
    encode_covariates, indicator_name, prune_collinear, CodingDictionary, DesignMatrix,
    EncodingSpec, LevelCode,
};
pub use load::{
    load_cohort, load_cohort_inferred, parse_event, read_cohort, save_cohort, write_cohort,
    Schema,
};
pub use split::{split_indices, test_size, train_test_split};
pub use subject::{Age, Censoring, CensoringKind, Cohort, Subject};

#[cfg(test)]
pub(crate) use subject::test_subject;
