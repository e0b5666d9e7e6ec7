use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TableError;

/// A structured table: optional caption, one header row and `n_rows` data rows.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TableSpec {
    pub caption: Option<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TableSpec {
    pub fn new(
        caption: Option<String>,
        header: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<Self, TableError> {
        let table = TableSpec {
            caption,
            header,
            rows,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), TableError> {
        let n_cols = self.header.len();
        if n_cols == 0 || self.rows.is_empty() {
            return Err(TableError::InvalidTable("table needs at least one row and column".into()));
        }
        if let Some(i) = self.rows.iter().position(|r| r.len() != n_cols) {
            return Err(TableError::InvalidTable(format!(
                "row {} has {} cells, expected {n_cols}",
                i + 1,
                self.rows[i].len()
            )));
        }
        for (i, name) in self.header.iter().enumerate() {
            if self.header[..i].contains(name) {
                return Err(TableError::InvalidTable(format!("duplicate column name {name:?}")));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.header.len()
    }

    /// Data cell at 1-indexed `(row, col)`; the header is not a row.
    pub fn cell(&self, row: usize, col: usize) -> Option<&str> {
        self.rows
            .get(row.checked_sub(1)?)?
            .get(col.checked_sub(1)?)
            .map(String::as_str)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name).map(|i| i + 1)
    }

    /// Caption, header and cells in reading order.
    pub fn all_text(&self) -> impl Iterator<Item = &str> {
        self.caption
            .iter()
            .map(String::as_str)
            .chain(self.header.iter().map(String::as_str))
            .chain(self.rows.iter().flatten().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableLimits {
    pub max_rows: usize,
    pub max_cols: usize,
    pub cell_alphabet: Vec<char>,
}

impl Default for TableLimits {
    fn default() -> Self {
        TableLimits {
            max_rows: 6,
            max_cols: 5,
            cell_alphabet: ('a'..='z').chain('A'..='Z').chain('0'..='9').collect(),
        }
    }
}

impl TableLimits {
    pub fn new(max_rows: usize, max_cols: usize) -> Self {
        TableLimits {
            max_rows,
            max_cols,
            ..Default::default()
        }
    }
}

const COLUMN_NAMES: [&str; 16] = [
    "Name", "Price", "City", "Year", "Count", "Code", "Color", "Score", "Size", "Type", "Level",
    "Rank", "Owner", "Status", "Region", "Total",
];

const CAPTION_WORDS: [&str; 14] = [
    "Prices", "Sales", "Inventory", "Results", "Summary", "Stock", "Orders", "Fleet", "Budget",
    "Survey", "Weekly", "Annual", "Regional", "Report",
];

fn token(rng: &mut ChaCha8Rng, alphabet: &[char]) -> String {
    let len = rng.random_range(2..=5);
    (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

/// Seeded random table within `limits`. Half of the tables carry a caption.
pub fn generate_table(seed: u64, limits: &TableLimits) -> Result<TableSpec, TableError> {
    if limits.max_rows == 0 || limits.max_cols == 0 {
        return Err(TableError::InvalidLimits("max_rows and max_cols must be >= 1".into()));
    }
    if limits.cell_alphabet.is_empty() || limits.cell_alphabet.iter().any(|c| !c.is_ascii_graphic()) {
        return Err(TableError::InvalidLimits(
            "cell alphabet must be non-empty printable ASCII without spaces".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_rows = rng.random_range(1..=limits.max_rows);
    let n_cols = rng.random_range(1..=limits.max_cols);

    let mut names: Vec<String> = COLUMN_NAMES.iter().map(|s| s.to_string()).collect();
    names.shuffle(&mut rng);
    for i in names.len()..n_cols {
        names.push(format!("Col{}", i + 1));
    }
    names.truncate(n_cols);

    let rows = (0..n_rows)
        .map(|_| (0..n_cols).map(|_| token(&mut rng, &limits.cell_alphabet)).collect())
        .collect();
    let caption = rng.random_bool(0.5).then(|| {
        let n = rng.random_range(1..=2);
        (0..n)
            .map(|_| CAPTION_WORDS[rng.random_range(0..CAPTION_WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ")
    });
    TableSpec::new(caption, names, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_limits() {
        let limits = TableLimits::new(1, 1);
        let t = generate_table(42, &limits).unwrap();
        assert_eq!((t.n_rows(), t.n_cols()), (1, 1));
        assert_eq!(t, generate_table(42, &limits).unwrap());
    }

    #[test]
    fn invariant_sweep() {
        let limits = TableLimits::new(5, 5);
        let mut captions = 0;
        for seed in 0..10_000 {
            let t = generate_table(seed, &limits).unwrap();
            t.validate().unwrap();
            assert!(t.n_rows() <= 5 && t.n_cols() <= 5);
            assert!(t.rows.iter().flatten().all(|c| c.chars().all(|ch| ch.is_ascii_alphanumeric())));
            captions += t.caption.is_some() as usize;
        }
        assert!((4_700..=5_300).contains(&captions), "{captions}");
    }

    #[test]
    fn distinct_seeds_differ() {
        let limits = TableLimits::new(5, 5);
        let mut collisions = 0;
        for s in 0..1_000u64 {
            let a = generate_table(s, &limits).unwrap();
            let b = generate_table(s + 1_000_003, &limits).unwrap();
            collisions += (a == b) as usize;
        }
        assert!(collisions <= 10);
    }

    #[test]
    fn many_columns_get_numbered_names() {
        let t = generate_table(1, &TableLimits::new(1, 40)).unwrap();
        t.validate().unwrap();
    }

    #[test]
    fn validation() {
        assert!(TableSpec::new(None, vec!["A".into(), "A".into()], vec![vec!["1".into(), "2".into()]]).is_err());
        assert!(TableSpec::new(None, vec!["A".into()], vec![]).is_err());
        assert!(TableSpec::new(None, vec!["A".into()], vec![vec![]]).is_err());
        assert!(generate_table(0, &TableLimits::new(0, 3)).is_err());
    }

    #[test]
    fn one_indexed_cells() {
        let t = TableSpec::new(None, vec!["A".into()], vec![vec!["x".into()]]).unwrap();
        assert_eq!(t.cell(1, 1), Some("x"));
        assert_eq!(t.cell(0, 1), None);
        assert_eq!(t.cell(2, 1), None);
    }
}
