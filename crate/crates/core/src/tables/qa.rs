use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TableError, TableSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    CellLookup,
    RowCount,
    ColCount,
    Caption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QaTemplate {
    pub id: u8,
    pub pattern: &'static str,
    pub answer_kind: AnswerKind,
}

/// The eleven SQL-like question templates.
pub const TEMPLATES: [QaTemplate; 11] = [
    QaTemplate {
        id: 1,
        pattern: "What is the cell value in row [row_number] and column [column_number]?",
        answer_kind: AnswerKind::CellLookup,
    },
    QaTemplate {
        id: 2,
        pattern: "What is the cell value in column [column_number] and row [row_number]?",
        answer_kind: AnswerKind::CellLookup,
    },
    QaTemplate {
        id: 3,
        pattern: "What does the cell in the row [row_number] and column [column_number] contain?",
        answer_kind: AnswerKind::CellLookup,
    },
    QaTemplate {
        id: 4,
        pattern: "What does the cell in column [column_number] and row [row_number] contain?",
        answer_kind: AnswerKind::CellLookup,
    },
    QaTemplate {
        id: 5,
        pattern: "What is the cell value in column [column_name] and row [row_number]?",
        answer_kind: AnswerKind::CellLookup,
    },
    QaTemplate {
        id: 6,
        pattern: "What is the value of cell where column is [column_name] and row number is [row_number]?",
        answer_kind: AnswerKind::CellLookup,
    },
    QaTemplate {
        id: 7,
        pattern: "What is the value in the cell in [column ordinal] column where the row contains [row entry]?",
        answer_kind: AnswerKind::CellLookup,
    },
    QaTemplate {
        id: 8,
        pattern: "What is the value for [column 1st entries]?",
        answer_kind: AnswerKind::CellLookup,
    },
    QaTemplate {
        id: 9,
        pattern: "How many rows are there in this table?",
        answer_kind: AnswerKind::RowCount,
    },
    QaTemplate {
        id: 10,
        pattern: "How many columns are there in this table?",
        answer_kind: AnswerKind::ColCount,
    },
    QaTemplate {
        id: 11,
        pattern: "What is the caption of the table?",
        answer_kind: AnswerKind::Caption,
    },
];

pub fn template(id: u8) -> Result<&'static QaTemplate, TableError> {
    TEMPLATES
        .iter()
        .find(|t| t.id == id)
        .ok_or(TableError::UnknownTemplate(id))
}

const ORDINALS: [&str; 9] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
];

pub fn ordinal(col: usize) -> Option<&'static str> {
    ORDINALS.get(col.checked_sub(1)?).copied()
}

/// The resolved reference a question was built from. Rows and columns are
/// 1-indexed over data rows; the header row is not counted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    CellByIndex { row: usize, col: usize },
    CellByName { column: String, row: usize },
    /// Column `col` of the unique row containing `entry` in any cell.
    CellByEntry { col: usize, entry: String },
    /// Column 2 of the unique row whose column 1 equals `key`.
    CellByKey { key: String },
    RowCount,
    ColCount,
    Caption,
}

fn unresolved(msg: impl Into<String>) -> TableError {
    TableError::QueryResolution(msg.into())
}

/// Answers `query` directly from the table.
pub fn oracle_answer(table: &TableSpec, query: &Query) -> Result<String, TableError> {
    let lookup = |row: usize, col: usize| {
        table
            .cell(row, col)
            .map(str::to_string)
            .ok_or_else(|| unresolved(format!("no cell at row {row}, column {col}")))
    };
    match query {
        Query::CellByIndex { row, col } => lookup(*row, *col),
        Query::CellByName { column, row } => {
            let col = table
                .column_index(column)
                .ok_or_else(|| unresolved(format!("no column named {column:?}")))?;
            lookup(*row, col)
        }
        Query::CellByEntry { col, entry } => {
            let hits: Vec<usize> = (1..=table.n_rows())
                .filter(|&r| table.rows[r - 1].iter().any(|c| c == entry))
                .collect();
            match hits.as_slice() {
                [row] => lookup(*row, *col),
                [] => Err(unresolved(format!("no row contains {entry:?}"))),
                _ => Err(unresolved(format!("{entry:?} appears in {} rows", hits.len()))),
            }
        }
        Query::CellByKey { key } => {
            let hits: Vec<usize> = (1..=table.n_rows())
                .filter(|&r| table.rows[r - 1][0] == *key)
                .collect();
            match hits.as_slice() {
                [row] => lookup(*row, 2),
                [] => Err(unresolved(format!("no first-column entry {key:?}"))),
                _ => Err(unresolved(format!("first-column entry {key:?} is ambiguous"))),
            }
        }
        Query::RowCount => Ok(table.n_rows().to_string()),
        Query::ColCount => Ok(table.n_cols().to_string()),
        Query::Caption => table
            .caption
            .clone()
            .ok_or_else(|| unresolved("table has no caption")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
    pub table: TableSpec,
    pub template_id: u8,
    pub provenance: Query,
}

/// Cells `(row, col)` whose value occurs in exactly one data row.
fn unique_row_entries(table: &TableSpec) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (r, row) in table.rows.iter().enumerate() {
        for (c, value) in row.iter().enumerate() {
            let rows_with = table.rows.iter().filter(|other| other.contains(value)).count();
            // Skip repeats within the same row so each value is offered once.
            if rows_with == 1 && !row[..c].contains(value) {
                out.push((r + 1, c + 1));
            }
        }
    }
    out
}

/// Rows whose first-column value is unique within column 1.
fn unique_keys(table: &TableSpec) -> Vec<usize> {
    (1..=table.n_rows())
        .filter(|&r| {
            let key = &table.rows[r - 1][0];
            table.rows.iter().filter(|row| row[0] == *key).count() == 1
        })
        .collect()
}

pub fn check_applicable(table: &TableSpec, template_id: u8) -> Result<(), TableError> {
    let not = |reason: &str| {
        Err(TableError::NotApplicable {
            template: template_id,
            reason: reason.to_string(),
        })
    };
    match template(template_id)?.id {
        7 if unique_row_entries(table).is_empty() => not("no cell value identifies a single row"),
        8 if table.n_cols() < 2 => not("needs at least two columns"),
        8 if unique_keys(table).is_empty() => not("no unique first-column entry"),
        11 if table.caption.is_none() => not("table has no caption"),
        _ => Ok(()),
    }
}

pub fn applicable_templates(table: &TableSpec) -> Vec<u8> {
    TEMPLATES
        .iter()
        .map(|t| t.id)
        .filter(|&id| check_applicable(table, id).is_ok())
        .collect()
}

fn quoted(s: &str) -> String {
    format!("\"{s}\"")
}

/// Fills a template from the table with seeded choices and answers it
/// through [`oracle_answer`].
pub fn instantiate_qa(table: &TableSpec, template_id: u8, seed: u64) -> Result<QaPair, TableError> {
    table.validate()?;
    check_applicable(table, template_id)?;
    let tpl = template(template_id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = rng.random_range(1..=table.n_rows());
    let col = rng.random_range(1..=table.n_cols());

    let (question, provenance) = match tpl.id {
        1..=4 => (
            tpl.pattern
                .replace("[row_number]", &row.to_string())
                .replace("[column_number]", &col.to_string()),
            Query::CellByIndex { row, col },
        ),
        5 | 6 => {
            let name = &table.header[col - 1];
            (
                tpl.pattern
                    .replace("[column_name]", &quoted(name))
                    .replace("[row_number]", &row.to_string()),
                Query::CellByName {
                    column: name.clone(),
                    row,
                },
            )
        }
        7 => {
            let entries = unique_row_entries(table);
            let (r, c) = entries[rng.random_range(0..entries.len())];
            let entry = table.rows[r - 1][c - 1].clone();
            let max_col = table.n_cols().min(ORDINALS.len());
            let targets: Vec<usize> = (1..=max_col).filter(|&t| t != c).collect();
            let target = if targets.is_empty() {
                c.min(max_col)
            } else {
                targets[rng.random_range(0..targets.len())]
            };
            let ordinal = ordinal(target).expect("target column within ordinal range");
            (
                tpl.pattern
                    .replace("[column ordinal]", ordinal)
                    .replace("[row entry]", &quoted(&entry)),
                Query::CellByEntry { col: target, entry },
            )
        }
        8 => {
            let keys = unique_keys(table);
            let r = keys[rng.random_range(0..keys.len())];
            let key = table.rows[r - 1][0].clone();
            (
                tpl.pattern.replace("[column 1st entries]", &quoted(&key)),
                Query::CellByKey { key },
            )
        }
        9 => (tpl.pattern.to_string(), Query::RowCount),
        10 => (tpl.pattern.to_string(), Query::ColCount),
        _ => (tpl.pattern.to_string(), Query::Caption),
    };
    let answer = oracle_answer(table, &provenance)?;
    Ok(QaPair {
        question,
        answer,
        table: table.clone(),
        template_id,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fruit() -> TableSpec {
        TableSpec::new(
            None,
            vec!["Fruit".into(), "Price".into()],
            vec![
                vec!["Mangoes".into(), "3".into()],
                vec!["Apples".into(), "2".into()],
            ],
        )
        .unwrap()
    }

    #[test]
    fn eleven_templates_with_distinct_ids() {
        let ids: Vec<u8> = TEMPLATES.iter().map(|t| t.id).collect();
        assert_eq!(ids, (1..=11).collect::<Vec<u8>>());
    }

    #[test]
    fn mangoes_second_column() {
        let q = Query::CellByEntry {
            col: 2,
            entry: "Mangoes".into(),
        };
        assert_eq!(oracle_answer(&fruit(), &q).unwrap(), "3");
        // Seeded instantiation always lands on a valid ordinal/entry pair.
        for seed in 0..50 {
            let qa = instantiate_qa(&fruit(), 7, seed).unwrap();
            assert!(qa.question.starts_with("What is the value in the cell in "));
            assert_eq!(oracle_answer(&fruit(), &qa.provenance).unwrap(), qa.answer);
        }
        let hit = (0..200)
            .map(|s| instantiate_qa(&fruit(), 7, s).unwrap())
            .find(|qa| qa.provenance == q)
            .unwrap();
        assert_eq!(
            hit.question,
            "What is the value in the cell in second column where the row contains \"Mangoes\"?"
        );
        assert_eq!(hit.answer, "3");
    }

    #[test]
    fn counts_and_lookups() {
        let qa = instantiate_qa(&fruit(), 9, 0).unwrap();
        assert_eq!(qa.question, "How many rows are there in this table?");
        assert_eq!(qa.answer, "2");
        assert_eq!(instantiate_qa(&fruit(), 10, 0).unwrap().answer, "2");
        assert_eq!(
            oracle_answer(&fruit(), &Query::CellByIndex { row: 2, col: 1 }).unwrap(),
            "Apples"
        );
        assert_eq!(
            oracle_answer(&fruit(), &Query::CellByName { column: "Price".into(), row: 1 }).unwrap(),
            "3"
        );
    }

    #[test]
    fn key_lookup_returns_second_column() {
        let t = TableSpec::new(
            None,
            vec!["Field".into(), "Value".into()],
            vec![
                vec!["City".into(), "Paris".into()],
                vec!["Zip".into(), "75001".into()],
            ],
        )
        .unwrap();
        assert_eq!(oracle_answer(&t, &Query::CellByKey { key: "City".into() }).unwrap(), "Paris");
        let hit = (0..100)
            .map(|s| instantiate_qa(&t, 8, s).unwrap())
            .find(|qa| qa.answer == "Paris")
            .unwrap();
        assert_eq!(hit.question, "What is the value for \"City\"?");
    }

    #[test]
    fn caption_template_requires_caption() {
        assert!(matches!(
            instantiate_qa(&fruit(), 11, 0),
            Err(TableError::NotApplicable { template: 11, .. })
        ));
        let mut t = fruit();
        t.caption = Some("Prices".into());
        assert_eq!(instantiate_qa(&t, 11, 0).unwrap().answer, "Prices");
    }

    #[test]
    fn entry_templates_need_unique_values() {
        let t = TableSpec::new(
            None,
            vec!["A".into(), "B".into()],
            vec![vec!["x".into(), "x".into()], vec!["x".into(), "x".into()]],
        )
        .unwrap();
        assert!(check_applicable(&t, 7).is_err());
        assert!(check_applicable(&t, 8).is_err());
        assert_eq!(applicable_templates(&t), vec![1, 2, 3, 4, 5, 6, 9, 10]);
        let single = TableSpec::new(None, vec!["A".into()], vec![vec!["x".into()]]).unwrap();
        assert!(check_applicable(&single, 8).is_err());
        assert_eq!(instantiate_qa(&single, 7, 3).unwrap().answer, "x");
    }

    #[test]
    fn unresolvable_queries() {
        let t = fruit();
        for q in [
            Query::CellByIndex { row: 3, col: 1 },
            Query::CellByIndex { row: 0, col: 1 },
            Query::CellByName { column: "Nope".into(), row: 1 },
            Query::CellByEntry { col: 1, entry: "Kiwi".into() },
            Query::CellByKey { key: "3".into() },
            Query::Caption,
        ] {
            assert!(matches!(oracle_answer(&t, &q), Err(TableError::QueryResolution(_))), "{q:?}");
        }
        assert!(matches!(instantiate_qa(&t, 12, 0), Err(TableError::UnknownTemplate(12))));
    }

    #[test]
    fn ordinals_cover_one_to_nine() {
        assert_eq!(ordinal(1), Some("first"));
        assert_eq!(ordinal(9), Some("ninth"));
        assert_eq!(ordinal(10), None);
        assert_eq!(ordinal(0), None);
    }
}
