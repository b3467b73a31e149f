//! Coarse and fine label sets and the partition map that expands each coarse
//! label into its fine-grained descendants.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{CategoryId, Element, Layout};

pub const DEFAULT_COARSE_LABELS: [&str; 10] = [
    "text",
    "title",
    "image",
    "table",
    "formula",
    "caption",
    "footnote",
    "list",
    "page_header",
    "page_footer",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    name: String,
    granularity: Granularity,
    labels: Vec<String>,
    index: HashMap<String, CategoryId>,
}

/// Lowercases and trims a label.
pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() {
        return Err(Error::InvalidTaxonomy("empty label".into()));
    }
    if label.chars().any(char::is_whitespace) {
        return Err(Error::InvalidTaxonomy(format!("label {label:?} contains whitespace")));
    }
    // Reserved by the textual token form.
    if label.starts_with("<|") || (label.len() == 4 && label.bytes().all(|b| b.is_ascii_digit())) {
        return Err(Error::InvalidTaxonomy(format!("label {label:?} collides with token syntax")));
    }
    Ok(())
}

impl Taxonomy {
    pub fn new<S: AsRef<str>>(
        name: impl Into<String>,
        granularity: Granularity,
        labels: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for raw in labels {
            let label = normalize_label(raw.as_ref());
            check_label(&label)?;
            if out.len() >= usize::from(u16::MAX) {
                return Err(Error::InvalidTaxonomy("too many labels".into()));
            }
            let id = CategoryId(out.len() as u16);
            if index.insert(label.clone(), id).is_some() {
                return Err(Error::InvalidTaxonomy(format!("duplicate label {label:?}")));
            }
            out.push(label);
        }
        if out.is_empty() {
            return Err(Error::InvalidTaxonomy("no labels".into()));
        }
        Ok(Self {
            name: name.into(),
            granularity,
            labels: out,
            index,
        })
    }

    /// The ten-label coarse taxonomy used for cross-domain pretraining data.
    pub fn default_coarse() -> Self {
        Self::new("coarse", Granularity::Coarse, DEFAULT_COARSE_LABELS).expect("static labels are valid")
    }

    /// Accepts either a bare JSON array of labels or `{"name": .., "labels": [..]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum File {
            List(Vec<String>),
            Named {
                #[serde(default = "default_name")]
                name: String,
                labels: Vec<String>,
                #[serde(default = "default_granularity")]
                granularity: Granularity,
            },
        }
        fn default_name() -> String {
            "custom".into()
        }
        fn default_granularity() -> Granularity {
            Granularity::Coarse
        }
        match serde_json::from_str::<File>(text)? {
            File::List(labels) => Self::new("custom", Granularity::Coarse, labels),
            File::Named {
                name,
                labels,
                granularity,
            } => Self::new(name, granularity, labels),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn granularity(&self) -> Granularity {
        self.granularity
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
    pub fn ids(&self) -> impl Iterator<Item = CategoryId> {
        (0..self.labels.len() as u16).map(CategoryId)
    }

    pub fn id(&self, label: &str) -> Result<CategoryId> {
        let key = normalize_label(label);
        self.index.get(&key).copied().ok_or(Error::UnknownLabel {
            label: label.to_string(),
            index: None,
        })
    }

    pub fn label(&self, id: CategoryId) -> Option<&str> {
        self.labels.get(id.index()).map(String::as_str)
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        id.index() < self.labels.len()
    }
}

/// On-disk form of a label map; may be invalid until checked with [`validate_map`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapConfig {
    pub coarse: Vec<String>,
    pub fine: Vec<String>,
    pub expansion: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Fine labels listed under more than one coarse label.
    pub overlaps: Vec<String>,
    /// Fine labels that appear in no expansion.
    pub uncovered: Vec<String>,
    /// Coarse labels whose expansion is empty or missing.
    pub empty_expansions: Vec<String>,
    /// Labels referenced by the expansion but absent from the label lists.
    pub unknown: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.overlaps.is_empty()
            && self.uncovered.is_empty()
            && self.empty_expansions.is_empty()
            && self.unknown.is_empty()
    }
}

pub fn validate_map(config: &LabelMapConfig) -> ValidationReport {
    let coarse: BTreeSet<String> = config.coarse.iter().map(|l| normalize_label(l)).collect();
    let fine: BTreeSet<String> = config.fine.iter().map(|l| normalize_label(l)).collect();
    let mut report = ValidationReport::default();
    let mut owners: BTreeMap<String, usize> = BTreeMap::new();

    for (parent, children) in &config.expansion {
        let parent = normalize_label(parent);
        if !coarse.contains(&parent) {
            report.unknown.push(parent.clone());
        }
        let children: BTreeSet<String> = children.iter().map(|c| normalize_label(c)).collect();
        if children.is_empty() {
            report.empty_expansions.push(parent.clone());
        }
        for child in children {
            if !fine.contains(&child) {
                report.unknown.push(child.clone());
            }
            *owners.entry(child).or_default() += 1;
        }
    }
    let expanded: BTreeSet<String> = config.expansion.keys().map(|k| normalize_label(k)).collect();
    for c in &coarse {
        if !expanded.contains(c) {
            report.empty_expansions.push(c.clone());
        }
    }
    report.overlaps = owners
        .iter()
        .filter(|(_, &n)| n > 1)
        .map(|(l, _)| l.clone())
        .collect();
    report.uncovered = fine.iter().filter(|l| !owners.contains_key(*l)).cloned().collect();
    report.empty_expansions.sort();
    report.empty_expansions.dedup();
    report.unknown.sort();
    report.unknown.dedup();
    report
}

/// A validated coarse/fine pair with a partitioning expansion map.
#[derive(Debug, Clone)]
pub struct LabelMap {
    coarse: Taxonomy,
    fine: Taxonomy,
    /// Coarse parent of each fine id.
    parent: Vec<CategoryId>,
}

impl LabelMap {
    pub fn new(config: &LabelMapConfig) -> Result<Self> {
        let report = validate_map(config);
        if !report.is_valid() {
            return Err(Error::InvalidLabelMap(format!(
                "overlaps {:?}, uncovered {:?}, empty {:?}, unknown {:?}",
                report.overlaps, report.uncovered, report.empty_expansions, report.unknown
            )));
        }
        let coarse = Taxonomy::new("coarse", Granularity::Coarse, &config.coarse)?;
        let fine = Taxonomy::new("fine", Granularity::Fine, &config.fine)?;
        let mut parent = vec![CategoryId(0); fine.len()];
        for (p, children) in &config.expansion {
            let pid = coarse.id(p)?;
            for c in children {
                parent[fine.id(c)?.index()] = pid;
            }
        }
        Ok(Self { coarse, fine, parent })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(&serde_json::from_str(text)?)
    }

    /// Every label maps to itself.
    pub fn identity(taxonomy: &Taxonomy) -> Self {
        let mut fine = taxonomy.clone();
        fine.granularity = Granularity::Fine;
        Self {
            coarse: taxonomy.clone(),
            fine,
            parent: taxonomy.ids().collect(),
        }
    }

    pub fn coarse(&self) -> &Taxonomy {
        &self.coarse
    }
    pub fn fine(&self) -> &Taxonomy {
        &self.fine
    }

    pub fn to_config(&self) -> LabelMapConfig {
        let mut expansion: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (fid, pid) in self.parent.iter().enumerate() {
            expansion
                .entry(self.coarse.labels[pid.index()].clone())
                .or_default()
                .push(self.fine.labels[fid].clone());
        }
        LabelMapConfig {
            coarse: self.coarse.labels.clone(),
            fine: self.fine.labels.clone(),
            expansion,
        }
    }

    /// Fine descendants of a coarse label.
    pub fn expand(&self, coarse_label: &str) -> Result<Vec<&str>> {
        let pid = self.coarse.id(coarse_label)?;
        Ok(self
            .parent
            .iter()
            .enumerate()
            .filter(|(_, p)| **p == pid)
            .map(|(f, _)| self.fine.labels[f].as_str())
            .collect())
    }

    pub fn coarsen(&self, fine_label: &str) -> Result<&str> {
        let fid = self.fine.id(fine_label)?;
        Ok(&self.coarse.labels[self.parent[fid.index()].index()])
    }

    pub fn coarsen_id(&self, fine: CategoryId) -> Result<CategoryId> {
        self.parent.get(fine.index()).copied().ok_or(Error::UnknownLabel {
            label: format!("#{}", fine.0),
            index: None,
        })
    }

    /// Relabels a fine-taxonomy layout into the coarse taxonomy. Geometry and
    /// order are untouched.
    pub fn project_layout(&self, layout: &Layout) -> Result<Layout> {
        let elements = layout
            .elements()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let category = self.coarsen_id(e.category).map_err(|_| Error::UnknownLabel {
                    label: format!("#{}", e.category.0),
                    index: Some(i),
                })?;
                Ok(Element::new(category, e.bbox))
            })
            .collect::<Result<Vec<_>>>()?;
        layout.with_elements(elements)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{BBox, DocType, Page};

    fn newspaper_map() -> LabelMapConfig {
        let mut expansion = BTreeMap::new();
        expansion.insert(
            "text".to_string(),
            vec!["paragraph".into(), "lead".into(), "ordered_list".into()],
        );
        expansion.insert("title".to_string(), vec!["headline".into(), "subhead".into()]);
        expansion.insert("image".to_string(), vec!["photo".into()]);
        LabelMapConfig {
            coarse: vec!["text".into(), "title".into(), "image".into()],
            fine: ["paragraph", "lead", "ordered_list", "headline", "subhead", "photo"]
                .map(String::from)
                .to_vec(),
            expansion,
        }
    }

    #[test]
    fn default_coarse_has_ten_labels() {
        let t = Taxonomy::default_coarse();
        assert_eq!(t.len(), 10);
        assert_eq!(t.id("Text").unwrap(), CategoryId(0));
        assert_eq!(t.label(CategoryId(9)), Some("page_footer"));
    }

    #[test]
    fn taxonomy_rejects_bad_labels() {
        assert!(Taxonomy::new("t", Granularity::Coarse, ["a", "A"]).is_err());
        assert!(Taxonomy::new("t", Granularity::Coarse, [""]).is_err());
        assert!(Taxonomy::new("t", Granularity::Coarse, ["two words"]).is_err());
        assert!(Taxonomy::new("t", Granularity::Coarse, ["0100"]).is_err());
        assert!(Taxonomy::new("t", Granularity::Coarse, Vec::<String>::new()).is_err());
    }

    #[test]
    fn taxonomy_file_forms() {
        let t = Taxonomy::from_json(r#"["Text", "image"]"#).unwrap();
        assert_eq!(t.labels(), ["text", "image"]);
        let t = Taxonomy::from_json(r#"{"name": "news", "labels": ["a", "b"], "granularity": "fine"}"#).unwrap();
        assert_eq!(t.name(), "news");
        assert_eq!(t.granularity(), Granularity::Fine);
    }

    #[test]
    fn coarsen_examples() {
        let map = LabelMap::new(&newspaper_map()).unwrap();
        assert_eq!(map.coarsen("paragraph").unwrap(), "text");
        assert_eq!(map.coarsen("lead").unwrap(), "text");
        assert_eq!(map.coarsen("subhead").unwrap(), "title");
        assert!(matches!(map.coarsen("zzz"), Err(Error::UnknownLabel { .. })));
        assert_eq!(map.expand("text").unwrap(), ["paragraph", "lead", "ordered_list"]);

        let id = LabelMap::identity(&Taxonomy::default_coarse());
        for l in DEFAULT_COARSE_LABELS {
            assert_eq!(id.coarsen(l).unwrap(), l);
        }
    }

    #[test]
    fn validate_reports() {
        assert!(validate_map(&newspaper_map()).is_valid());

        let mut overlap = newspaper_map();
        overlap.expansion.get_mut("title").unwrap().push("lead".into());
        let r = validate_map(&overlap);
        assert_eq!(r.overlaps, ["lead"]);
        assert!(LabelMap::new(&overlap).is_err());

        let mut uncovered = newspaper_map();
        uncovered.fine.push("byline".into());
        let r = validate_map(&uncovered);
        assert_eq!(r.uncovered, ["byline"]);
        assert!(r.overlaps.is_empty());

        let mut empty = newspaper_map();
        empty.coarse.push("table".into());
        assert_eq!(validate_map(&empty).empty_expansions, ["table"]);
    }

    #[test]
    fn partition_is_total() {
        let map = LabelMap::new(&newspaper_map()).unwrap();
        for l in map.fine().labels() {
            assert!(map.coarsen(l).is_ok());
        }
        assert_eq!(validate_map(&map.to_config()), ValidationReport::default());
    }

    #[test]
    fn project_layout_examples() {
        let map = LabelMap::new(&newspaper_map()).unwrap();
        let f = map.fine();
        let b = BBox::new(0.1, 0.1, 0.2, 0.2).unwrap();
        let page = Page::new("x", DocType::Newspaper, 100, 100);
        let cats = ["paragraph", "lead", "paragraph"].map(|l| f.id(l).unwrap());
        let layout = Layout::new(page.clone(), cats.iter().map(|&c| Element::new(c, b)).collect()).unwrap();
        let projected = map.project_layout(&layout).unwrap();
        let labels: Vec<_> = projected
            .categories()
            .map(|c| map.coarse().label(c).unwrap())
            .collect();
        assert_eq!(labels, ["text", "text", "text"]);
        assert_eq!(projected.elements()[1].bbox, b);

        let bad = Layout::new(page, vec![Element::new(CategoryId(0), b), Element::new(CategoryId(42), b)]).unwrap();
        assert!(matches!(
            map.project_layout(&bad),
            Err(Error::UnknownLabel { index: Some(1), .. })
        ));
    }
}
