//! Token-level inter-annotator agreement: Cohen's κ and pairwise F1 per label
//! and per source, with micro and macro aggregates.

use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationSet, Label, LabelSet};
use crate::corpus::SourceKind;
use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::tokenize::{TokenizedText, Tokenizer};

/// Three parallel indicator sequences, one per label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLabelVector {
    pub text_id: String,
    pub tokenizer_id: String,
    bits: [Vec<bool>; 3],
}

impl TokenLabelVector {
    pub fn zeros(text_id: &str, tokenizer_id: &str, len: usize) -> Self {
        Self {
            text_id: text_id.to_string(),
            tokenizer_id: tokenizer_id.to_string(),
            bits: [vec![false; len], vec![false; len], vec![false; len]],
        }
    }

    pub fn len(&self) -> usize {
        self.bits[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, label: Label) -> &[bool] {
        &self.bits[label.index()]
    }

    pub fn set(&mut self, label: Label, token: usize) {
        self.bits[label.index()][token] = true;
    }

    pub fn label_sets(&self) -> Vec<LabelSet> {
        (0..self.len())
            .map(|i| {
                let mut s = LabelSet::EMPTY;
                for l in Label::ALL {
                    if self.bits[l.index()][i] {
                        s.insert(l);
                    }
                }
                s
            })
            .collect()
    }
}

/// Marks token `t` with label `L` iff some fragment of some `L` entity shares
/// at least one character with the token. Also returns how many entities
/// touched no token at all, which usually means a tokenizer mismatch.
pub fn project_to_tokens(set: &AnnotationSet, tokens: &TokenizedText) -> (TokenLabelVector, usize) {
    let mut out = TokenLabelVector::zeros(&set.text_id, &tokens.tokenizer_id, tokens.len());
    let mut uncovered = 0;
    for e in &set.entities {
        let mut hit = false;
        for (i, tok) in tokens.tokens.iter().enumerate() {
            if e.fragments.iter().any(|f| f.overlaps(tok.start, tok.end)) {
                out.set(e.label, i);
                hit = true;
            }
        }
        if !hit {
            uncovered += 1;
        }
    }
    if uncovered > 0 {
        log::warn!(
            "{uncovered} entities of text {} cover no {} token",
            set.text_id,
            tokens.tokenizer_id
        );
    }
    (out, uncovered)
}

/// 2×2 agreement table between two binary sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementCounts {
    pub both: u64,
    pub only_a: u64,
    pub only_b: u64,
    pub neither: u64,
}

impl AgreementCounts {
    pub fn from_bits(a: &[bool], b: &[bool]) -> Result<Self> {
        contract!(
            a.len() == b.len(),
            "sequence lengths differ ({} vs {})",
            a.len(),
            b.len()
        );
        let mut c = Self::default();
        for (&x, &y) in a.iter().zip(b) {
            match (x, y) {
                (true, true) => c.both += 1,
                (true, false) => c.only_a += 1,
                (false, true) => c.only_b += 1,
                (false, false) => c.neither += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.both + self.only_a + self.only_b + self.neither
    }

    pub fn merge(&mut self, other: &Self) {
        self.both += other.both;
        self.only_a += other.only_a;
        self.only_b += other.only_b;
        self.neither += other.neither;
    }

    /// Cohen's κ; 1 when observed agreement is perfect. `None` for an empty
    /// table.
    pub fn kappa<T: Scalar>(&self) -> Option<T> {
        let n = self.total();
        if n == 0 {
            return None;
        }
        if self.only_a + self.only_b == 0 {
            return Some(T::one());
        }
        let nf = T::lit(n as f64);
        let p_o = T::lit((self.both + self.neither) as f64) / nf;
        let pa = T::lit((self.both + self.only_a) as f64) / nf;
        let pb = T::lit((self.both + self.only_b) as f64) / nf;
        let p_e = pa * pb + (T::one() - pa) * (T::one() - pb);
        Some((p_o - p_e) / (T::one() - p_e))
    }

    /// `2|a∧b| / (|a| + |b|)`; 1 when neither side marks anything.
    pub fn f1<T: Scalar>(&self) -> T {
        let denom = 2 * self.both + self.only_a + self.only_b;
        if denom == 0 {
            return T::one();
        }
        T::lit((2 * self.both) as f64) / T::lit(denom as f64)
    }
}

/// Cohen's κ between two equal-length, non-empty indicator sequences.
pub fn cohen_kappa<T: Scalar>(a: &[bool], b: &[bool]) -> Result<T> {
    contract!(!a.is_empty(), "kappa needs at least one position");
    let counts = AgreementCounts::from_bits(a, b)?;
    Ok(counts.kappa().expect("non-empty table"))
}

/// Pairwise F1 between two equal-length indicator sequences.
pub fn pairwise_f1<T: Scalar>(a: &[bool], b: &[bool]) -> Result<T> {
    Ok(AgreementCounts::from_bits(a, b)?.f1())
}

/// Table column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Column {
    #[serde(rename = "FMEA")]
    Fmea,
    Slides,
    MicroAvg,
    MacroAvg,
}

impl Column {
    pub const ALL: [Column; 4] = [Column::Fmea, Column::Slides, Column::MicroAvg, Column::MacroAvg];

    pub fn source(self) -> Option<SourceKind> {
        match self {
            Column::Fmea => Some(SourceKind::Fmea),
            Column::Slides => Some(SourceKind::Slides),
            _ => None,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Column::Fmea => "FMEA",
            Column::Slides => "Slides",
            Column::MicroAvg => "Micro Avg",
            Column::MacroAvg => "Macro Avg",
        }
    }
}

/// Table row: a label or the macro average over labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Row {
    Label(Label),
    MacroAvg,
}

impl Row {
    pub const ALL: [Row; 4] = [
        Row::Label(Label::Trigger),
        Row::Label(Label::Cause),
        Row::Label(Label::Effect),
        Row::MacroAvg,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Row::Label(l) => l.as_str(),
            Row::MacroAvg => "Macro Avg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementCell {
    /// Percent.
    pub kappa: f64,
    /// Percent.
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaRecord {
    pub label: String,
    pub source: String,
    pub kappa: Option<f64>,
    pub f1: Option<f64>,
    pub n_tokens: u64,
}

/// Agreement table: rows Trigger, Cause, Effect, Macro Avg; columns FMEA,
/// Slides, Micro Avg, Macro Avg. Values are percentages at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaReport {
    pub tokenizer_id: String,
    cells: [[Option<AgreementCell>; 4]; 4],
    /// Raw counts per label (Trigger, Cause, Effect) and source (FMEA, Slides).
    counts: [[AgreementCounts; 2]; 3],
    pub texts_used: usize,
    pub texts_excluded: Vec<String>,
    pub uncovered_entities: usize,
}

/// One doubly annotated text for agreement computation.
#[derive(Debug, Clone)]
pub struct IaaText<'a> {
    pub text_id: &'a str,
    pub text: &'a str,
    pub source_kind: SourceKind,
    pub first: Option<&'a AnnotationSet>,
    pub second: Option<&'a AnnotationSet>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

impl IaaReport {
    /// Report with externally supplied cell values (e.g. published tables).
    pub fn from_cells(tokenizer_id: &str, cells: [[Option<AgreementCell>; 4]; 4]) -> Self {
        Self {
            tokenizer_id: tokenizer_id.to_string(),
            cells,
            counts: Default::default(),
            texts_used: 0,
            texts_excluded: Vec::new(),
            uncovered_entities: 0,
        }
    }

    fn from_counts(tokenizer_id: &str, counts: [[AgreementCounts; 2]; 3]) -> Self {
        let mut cells = [[None; 4]; 4];
        for (r, per_source) in counts.iter().enumerate() {
            let mut sources = Vec::new();
            let mut pooled = AgreementCounts::default();
            for (s, c) in per_source.iter().enumerate() {
                pooled.merge(c);
                if let Some(kappa) = c.kappa::<f64>() {
                    let cell = AgreementCell {
                        kappa: 100.0 * kappa,
                        f1: 100.0 * c.f1::<f64>(),
                    };
                    cells[r][s] = Some(cell);
                    sources.push(cell);
                }
            }
            cells[r][2] = pooled.kappa::<f64>().map(|k| AgreementCell {
                kappa: 100.0 * k,
                f1: 100.0 * pooled.f1::<f64>(),
            });
            cells[r][3] = mean(&sources.iter().map(|c| c.kappa).collect::<Vec<_>>()).map(|k| {
                AgreementCell {
                    kappa: k,
                    f1: mean(&sources.iter().map(|c| c.f1).collect::<Vec<_>>()).unwrap_or(k),
                }
            });
        }
        for col in 0..4 {
            let row: Vec<AgreementCell> = (0..3).filter_map(|r| cells[r][col]).collect();
            if row.len() == 3 {
                cells[3][col] = Some(AgreementCell {
                    kappa: mean(&row.iter().map(|c| c.kappa).collect::<Vec<_>>()).unwrap_or(0.0),
                    f1: mean(&row.iter().map(|c| c.f1).collect::<Vec<_>>()).unwrap_or(0.0),
                });
            }
        }
        Self {
            tokenizer_id: tokenizer_id.to_string(),
            cells,
            counts,
            texts_used: 0,
            texts_excluded: Vec::new(),
            uncovered_entities: 0,
        }
    }

    pub fn cell(&self, row: Row, column: Column) -> Option<AgreementCell> {
        let r = Row::ALL.iter().position(|&x| x == row).expect("row");
        let c = Column::ALL.iter().position(|&x| x == column).expect("column");
        self.cells[r][c]
    }

    pub fn counts(&self, label: Label, source: SourceKind) -> AgreementCounts {
        let r = Label::REPORT_ORDER.iter().position(|&l| l == label).expect("label");
        let s = SourceKind::ALL.iter().position(|&k| k == source).expect("source");
        self.counts[r][s]
    }

    pub fn records(&self) -> Vec<IaaRecord> {
        let mut out = Vec::new();
        for row in Row::ALL {
            for column in Column::ALL {
                let n_tokens = match (row, column.source()) {
                    (Row::Label(l), Some(s)) => self.counts(l, s).total(),
                    (Row::Label(l), None) => SourceKind::ALL
                        .iter()
                        .map(|&s| self.counts(l, s).total())
                        .sum(),
                    (Row::MacroAvg, Some(s)) => self.counts(Label::Trigger, s).total(),
                    (Row::MacroAvg, None) => SourceKind::ALL
                        .iter()
                        .map(|&s| self.counts(Label::Trigger, s).total())
                        .sum(),
                };
                let cell = self.cell(row, column);
                out.push(IaaRecord {
                    label: row.title().to_string(),
                    source: column.title().to_string(),
                    kappa: cell.map(|c| c.kappa),
                    f1: cell.map(|c| c.f1),
                    n_tokens,
                });
            }
        }
        out
    }

    /// Plain-text rendering with integer percentages.
    pub fn render(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.0}", v.round()));
        let mut out = String::new();
        out.push_str(&format!(
            "{:<17}{:<14}{:<14}{:<14}{:<14}\n",
            "", "FMEA", "Slides", "Micro Avg", "Macro Avg"
        ));
        out.push_str(&format!(
            "{:<17}{:<14}{:<14}{:<14}{:<14}\n",
            "", "", "", "FMEA&Slides", "FMEA&Slides"
        ));
        out.push_str(&format!("{:<17}", "Annotation Type"));
        for _ in 0..4 {
            out.push_str(&format!("{:<7}{:<7}", "κ%", "F1%"));
        }
        out.push('\n');
        for row in Row::ALL {
            out.push_str(&format!("{:<17}", row.title()));
            for column in Column::ALL {
                let cell = self.cell(row, column);
                out.push_str(&format!(
                    "{:<7}{:<7}",
                    fmt(cell.map(|c| c.kappa)),
                    fmt(cell.map(|c| c.f1))
                ));
            }
            out.push('\n');
        }
        out.lines().map(str::trim_end).collect::<Vec<_>>().join("\n") + "\n"
    }
}

/// Computes the agreement table. Texts lacking either annotator are skipped
/// and listed in `texts_excluded`.
pub fn iaa_report(texts: &[IaaText<'_>], tokenizer: &dyn Tokenizer) -> IaaReport {
    let mut counts = [[AgreementCounts::default(); 2]; 3];
    let mut excluded = Vec::new();
    let mut used = 0;
    let mut uncovered = 0;
    for t in texts {
        let (Some(a), Some(b)) = (t.first, t.second) else {
            excluded.push(t.text_id.to_string());
            continue;
        };
        used += 1;
        let tokens = tokenizer.tokenize_text(t.text);
        let (va, ua) = project_to_tokens(a, &tokens);
        let (vb, ub) = project_to_tokens(b, &tokens);
        uncovered += ua + ub;
        let s = SourceKind::ALL
            .iter()
            .position(|&k| k == t.source_kind)
            .expect("source");
        for (r, label) in Label::REPORT_ORDER.into_iter().enumerate() {
            let c = AgreementCounts::from_bits(va.get(label), vb.get(label))
                .expect("projections over one tokenization have equal length");
            counts[r][s].merge(&c);
        }
    }
    if !excluded.is_empty() {
        log::warn!(
            "{} texts lack a second annotation and were excluded from agreement",
            excluded.len()
        );
    }
    let mut report = IaaReport::from_counts(tokenizer.id(), counts);
    report.texts_used = used;
    report.texts_excluded = excluded;
    report.uncovered_entities = uncovered;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{Entity, Fragment};
    use crate::tokenize::{Token, WhitespacePunct};

    fn bits(n: usize, ones: &[usize]) -> Vec<bool> {
        (0..n).map(|i| ones.contains(&i)).collect()
    }

    #[test]
    fn kappa_fixtures() {
        let a = [true, false, true, false];
        assert_eq!(cohen_kappa::<f64>(&a, &a).unwrap(), 1.0);
        let k: f64 = cohen_kappa(&bits(10, &[1, 2, 3]), &bits(10, &[2, 3, 4])).unwrap();
        assert!((k - (0.8 - 0.58) / 0.42).abs() < 1e-12);
        let k: f64 = cohen_kappa(&bits(4, &[0]), &bits(4, &[1])).unwrap();
        assert!((k - (0.5 - 0.625) / 0.375).abs() < 1e-12);
    }

    #[test]
    fn f1_fixtures() {
        let a = bits(6, &[1, 2]);
        assert_eq!(pairwise_f1::<f64>(&a, &a).unwrap(), 1.0);
        let f: f64 = pairwise_f1(&bits(6, &[1, 2, 3]), &bits(6, &[2, 3, 4])).unwrap();
        assert!((f - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(pairwise_f1::<f64>(&bits(4, &[0]), &bits(4, &[1])).unwrap(), 0.0);
        assert_eq!(pairwise_f1::<f64>(&bits(4, &[]), &bits(4, &[])).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch_is_contract_violation() {
        assert!(cohen_kappa::<f64>(&[true], &[true, false]).is_err());
        assert!(pairwise_f1::<f64>(&[true], &[]).is_err());
        assert!(cohen_kappa::<f64>(&[], &[]).is_err());
    }

    fn tokens(spans: &[(usize, usize)]) -> TokenizedText {
        TokenizedText {
            tokenizer_id: "test".into(),
            tokens: spans
                .iter()
                .map(|&(start, end)| Token {
                    text: String::new(),
                    start,
                    end,
                })
                .collect(),
        }
    }

    fn with_entity(start: usize, end: usize) -> AnnotationSet {
        AnnotationSet {
            entities: vec![Entity {
                id: "T1".into(),
                label: Label::Cause,
                fragments: vec![Fragment::new(start, end)],
                surface: String::new(),
            }],
            ..AnnotationSet::default()
        }
    }

    #[test]
    fn projection_examples() {
        let toks = tokens(&[(0, 3), (4, 7)]);
        let (v, _) = project_to_tokens(&with_entity(0, 3), &toks);
        assert_eq!(v.get(Label::Cause), &[true, false]);
        let (v, _) = project_to_tokens(&with_entity(2, 5), &toks);
        assert_eq!(v.get(Label::Cause), &[true, true]);
        let (v, u) = project_to_tokens(&AnnotationSet::default(), &toks);
        assert!(v.label_sets().iter().all(|s| s.is_empty()));
        assert_eq!(u, 0);
        let (_, u) = project_to_tokens(&with_entity(3, 4), &toks);
        assert_eq!(u, 1);
    }

    #[test]
    fn identical_annotators_score_one_hundred() {
        let text = "Die chipping due to dicing";
        let set = crate::annotation::parse_standoff(
            "T1\tEffect 0 12\tDie chipping\nT2\tTrigger 13 19\tdue to\nT3\tCause 20 26\tdicing\n",
            text,
        )
        .unwrap();
        let texts: Vec<IaaText> = SourceKind::ALL
            .iter()
            .map(|&k| IaaText {
                text_id: "x",
                text,
                source_kind: k,
                first: Some(&set),
                second: Some(&set),
            })
            .collect();
        let report = iaa_report(&texts, &WhitespacePunct);
        for row in Row::ALL {
            for col in Column::ALL {
                let c = report.cell(row, col).unwrap();
                assert_eq!((c.kappa, c.f1), (100.0, 100.0));
            }
        }
    }

    #[test]
    fn missing_annotator_is_excluded() {
        let set = AnnotationSet::default();
        let texts = [IaaText {
            text_id: "lonely",
            text: "a b",
            source_kind: SourceKind::Fmea,
            first: Some(&set),
            second: None,
        }];
        let report = iaa_report(&texts, &WhitespacePunct);
        assert_eq!(report.texts_excluded, vec!["lonely".to_string()]);
        assert_eq!(report.cell(Row::MacroAvg, Column::Fmea), None);
    }
}
