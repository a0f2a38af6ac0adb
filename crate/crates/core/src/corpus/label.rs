use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

macro_rules! section_labels {
    ($($variant:ident => $text:literal,)*) => {
        /// The canonical discharge-summary sections, in document order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum SectionLabel {
            $($variant,)*
        }

        impl SectionLabel {
            pub const ALL: [SectionLabel; 25] = [$(SectionLabel::$variant,)*];

            /// Fixed lowercase form, used in corpus files and for heading
            /// matching.
            pub fn as_str(self) -> &'static str {
                match self {
                    $(SectionLabel::$variant => $text,)*
                }
            }
        }
    };
}

section_labels! {
    AdmissionDate => "admission date",
    DischargeDate => "discharge date",
    DateOfBirth => "date of birth",
    Sex => "sex",
    Service => "service",
    Allergies => "allergies",
    Attending => "attending",
    ChiefComplaint => "chief complaint",
    MajorProcedure => "major surgical or invasive procedure",
    HistoryOfPresentIllness => "history of present illness",
    ReviewOfSystem => "review of system",
    PastMedicalHistory => "past medical history",
    SocialHistory => "social history",
    FamilyHistory => "family history",
    PhysicalExam => "physical exam",
    PertinentResult => "pertinent result",
    HospitalCourse => "hospital course",
    MedicationOnAdmission => "medication on admission",
    DischargeMedications => "discharge medications",
    DischargeDisposition => "discharge disposition",
    Facility => "facility",
    DischargeDiagnosis => "discharge diagnosis",
    DischargeCondition => "discharge condition",
    DischargeInstruction => "discharge instruction",
    FollowUpInstruction => "follow-up instruction",
}

pub const NUM_LABELS: usize = SectionLabel::ALL.len();

impl SectionLabel {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SectionLabel> {
        SectionLabel::ALL.get(i).copied()
    }

    /// Tokens of the canonical form after normalization.
    pub fn tokens(self) -> Vec<String> {
        crate::normalize::tokenize(&crate::normalize::normalize_text(self.as_str()))
    }
}

impl fmt::Display for SectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SectionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        SectionLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

impl Serialize for SectionLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SectionLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_five_distinct_labels() {
        let mut names: Vec<_> = SectionLabel::ALL.iter().map(|l| l.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 25);
        for (i, l) in SectionLabel::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(SectionLabel::from_index(i), Some(*l));
            assert_eq!(l.as_str().parse::<SectionLabel>().unwrap(), *l);
            assert_eq!(l.as_str(), l.as_str().to_lowercase());
        }
        assert!("lab".parse::<SectionLabel>().is_err());
    }

    #[test]
    fn canonical_tokens() {
        assert_eq!(SectionLabel::HistoryOfPresentIllness.tokens(), ["history", "of", "present", "illness"]);
        assert_eq!(SectionLabel::FollowUpInstruction.tokens(), ["follow", "up", "instruction"]);
    }
}
