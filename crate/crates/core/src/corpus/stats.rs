use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::label::Label;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub per_split: BTreeMap<Split, usize>,
    pub per_lang: BTreeMap<String, usize>,
    /// Only labels that are present are counted; unlabeled instances are
    /// reported in `unlabeled`.
    pub gold_labels: BTreeMap<Label, usize>,
    pub unlabeled: usize,
}

impl DatasetStats {
    pub fn split_count(&self, split: Split) -> usize {
        self.per_split.get(&split).copied().unwrap_or(0)
    }
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let mut stats = DatasetStats {
        total: dataset.len(),
        ..DatasetStats::default()
    };
    for inst in dataset {
        *stats.per_split.entry(inst.split).or_default() += 1;
        *stats.per_lang.entry(inst.lang.clone()).or_default() += 1;
        match inst.gold_label {
            Some(label) => *stats.gold_labels.entry(label).or_default() += 1,
            None => stats.unlabeled += 1,
        }
    }
    stats
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total        {:>9}", self.total)?;
        for split in Split::ALL {
            writeln!(f, "{:<12} {:>9}", split.as_str(), self.split_count(split))?;
        }
        for (lang, n) in &self.per_lang {
            writeln!(f, "lang:{:<7} {:>9}", lang, n)?;
        }
        for (label, n) in &self.gold_labels {
            writeln!(f, "gold:{:<7} {:>9}", label.as_str(), n)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReviewInstance;

    #[test]
    fn empty_dataset_has_zero_counts() {
        let s = dataset_stats(&Dataset::default());
        assert_eq!(s.total, 0);
        assert!(s.per_split.is_empty() && s.per_lang.is_empty() && s.gold_labels.is_empty());
    }

    #[test]
    fn counts_by_split_lang_and_label() {
        let d = Dataset::new(vec![
            ReviewInstance::new("a", "p", "c").with_lang("py"),
            ReviewInstance::new("b", "p", "c").with_lang("py").with_gold(Label::Valid),
            ReviewInstance::new("c", "p", "c").with_split(Split::Test).with_lang("go"),
        ])
        .unwrap();
        let s = dataset_stats(&d);
        assert_eq!(s.split_count(Split::Train), 2);
        assert_eq!(s.split_count(Split::Test), 1);
        assert_eq!(s.split_count(Split::Validation), 0);
        assert_eq!(s.per_lang["py"], 2);
        assert_eq!(s.gold_labels[&Label::Valid], 1);
        assert_eq!(s.unlabeled, 2);
        assert_eq!(s.per_split.values().sum::<usize>(), s.total);
    }
}
