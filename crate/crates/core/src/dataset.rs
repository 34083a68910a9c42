//! Rating corpora: loading, normalization, base/eval splitting and the
//! user/item transpose used by the new-item problem.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("no ratings")]
    NoRatings,
    #[error("line {line}: rating {rating} outside [0, {scale_max}]")]
    RatingOutOfRange {
        line: usize,
        rating: f64,
        scale_max: f64,
    },
    #[error("scale ceiling must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("triple ({user}, {item}) outside a {n_users}x{n_items} dataset")]
    IdOutOfRange {
        user: usize,
        item: usize,
        n_users: usize,
        n_items: usize,
    },
    #[error("duplicate rating for ({user}, {item})")]
    DuplicatePair { user: usize, item: usize },
    #[error("rating {rating} for ({user}, {item}) outside [0, {scale_max}]")]
    InvalidRating {
        user: usize,
        item: usize,
        rating: f64,
        scale_max: f64,
    },
    #[error("base size {k} must be in 1..{n_users}")]
    BaseSize { k: usize, n_users: usize },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

/// Sparse ratings over a dense `n_users × n_items` id space.
///
/// Triples are kept sorted by `(user, item)`; `user_offsets` indexes each
/// user's contiguous run.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    n_users: usize,
    n_items: usize,
    triples: Vec<RatingTriple>,
    user_offsets: Vec<usize>,
    scale_max: f64,
}

impl RatingDataset {
    pub fn new(
        n_users: usize,
        n_items: usize,
        mut triples: Vec<RatingTriple>,
        scale_max: f64,
    ) -> Result<Self> {
        if !(scale_max.is_finite() && scale_max > 0.0) {
            return Err(DatasetError::InvalidScale(scale_max));
        }
        for t in &triples {
            if t.user >= n_users || t.item >= n_items {
                return Err(DatasetError::IdOutOfRange {
                    user: t.user,
                    item: t.item,
                    n_users,
                    n_items,
                });
            }
            if !(0.0..=scale_max).contains(&t.rating) {
                return Err(DatasetError::InvalidRating {
                    user: t.user,
                    item: t.item,
                    rating: t.rating,
                    scale_max,
                });
            }
        }
        triples.sort_by_key(|t| (t.user, t.item));
        if let Some(w) = triples
            .windows(2)
            .find(|w| (w[0].user, w[0].item) == (w[1].user, w[1].item))
        {
            return Err(DatasetError::DuplicatePair {
                user: w[0].user,
                item: w[0].item,
            });
        }
        let mut user_offsets = vec![0; n_users + 1];
        for t in &triples {
            user_offsets[t.user + 1] += 1;
        }
        for u in 0..n_users {
            user_offsets[u + 1] += user_offsets[u];
        }
        Ok(Self {
            n_users,
            n_items,
            triples,
            user_offsets,
            scale_max,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn scale_max(&self) -> f64 {
        self.scale_max
    }

    pub fn triples(&self) -> &[RatingTriple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// The ratings of one user, sorted by item.
    pub fn user_ratings(&self, user: usize) -> &[RatingTriple] {
        &self.triples[self.user_offsets[user]..self.user_offsets[user + 1]]
    }

    pub fn user_rating_count(&self, user: usize) -> usize {
        self.user_offsets[user + 1] - self.user_offsets[user]
    }

    /// Keeps only users with at least `min` ratings, re-indexing them densely.
    pub fn filter_min_ratings(&self, min: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.n_users)
            .filter(|&u| self.user_rating_count(u) >= min.max(1))
            .collect();
        self.restrict_users(&keep)
    }

    /// Restricts to `users` (in the given order); user `users[r]` becomes row `r`.
    pub fn restrict_users(&self, users: &[usize]) -> Result<Self> {
        let mut triples = Vec::new();
        for (row, &u) in users.iter().enumerate() {
            triples.extend(
                self.user_ratings(u)
                    .iter()
                    .map(|t| RatingTriple { user: row, ..*t }),
            );
        }
        Self::new(users.len(), self.n_items, triples, self.scale_max)
    }

    /// Uniform subsample of at most `max_items` items, then at most `max_users`
    /// users among those with a rating on a kept item. Both id spaces are re-indexed densely.
    pub fn subsample(
        &self,
        max_users: Option<usize>,
        max_items: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<usize> = match max_items {
            Some(cap) if cap < self.n_items => sorted_sample(&mut rng, self.n_items, cap),
            _ => (0..self.n_items).collect(),
        };
        let mut item_map = vec![usize::MAX; self.n_items];
        for (new, &old) in items.iter().enumerate() {
            item_map[old] = new;
        }
        let candidates: Vec<usize> = (0..self.n_users)
            .filter(|&u| {
                self.user_ratings(u)
                    .iter()
                    .any(|t| item_map[t.item] != usize::MAX)
            })
            .collect();
        let users: Vec<usize> = match max_users {
            Some(cap) if cap < candidates.len() => sorted_sample(&mut rng, candidates.len(), cap)
                .into_iter()
                .map(|i| candidates[i])
                .collect(),
            _ => candidates,
        };
        let mut triples = Vec::new();
        for (row, &u) in users.iter().enumerate() {
            for t in self.user_ratings(u) {
                let item = item_map[t.item];
                if item != usize::MAX {
                    triples.push(RatingTriple {
                        user: row,
                        item,
                        rating: t.rating,
                    });
                }
            }
        }
        if triples.is_empty() {
            return Err(DatasetError::NoRatings);
        }
        Self::new(users.len(), items.len(), triples, self.scale_max)
    }
}

fn sorted_sample(rng: &mut ChaCha8Rng, len: usize, amount: usize) -> Vec<usize> {
    let mut v = index::sample(rng, len, amount).into_vec();
    v.sort_unstable();
    v
}

/// Which side of the rating matrix is cold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    NewUser,
    NewItem,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::NewUser => "new-user",
            ProblemKind::NewItem => "new-item",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "new-user" => Ok(ProblemKind::NewUser),
            "new-item" => Ok(ProblemKind::NewItem),
            other => Err(format!(
                "unknown problem kind '{other}' (expected new-user|new-item)"
            )),
        }
    }
}

/// Puts the cold side on the rows: identity for new users, transpose for new items.
pub fn orient(d: &RatingDataset, kind: ProblemKind) -> RatingDataset {
    match kind {
        ProblemKind::NewUser => d.clone(),
        ProblemKind::NewItem => {
            let triples = d
                .triples
                .iter()
                .map(|t| RatingTriple {
                    user: t.item,
                    item: t.user,
                    rating: t.rating,
                })
                .collect();
            RatingDataset::new(d.n_items, d.n_users, triples, d.scale_max)
                .expect("transpose of a valid dataset is valid")
        }
    }
}

/// Divides every rating by the scale ceiling so ratings land in `[0, 1]`.
pub fn normalize(d: &RatingDataset) -> RatingDataset {
    let triples = d
        .triples
        .iter()
        .map(|t| RatingTriple {
            rating: (t.rating / d.scale_max).clamp(0.0, 1.0),
            ..*t
        })
        .collect();
    RatingDataset::new(d.n_users, d.n_items, triples, 1.0).expect("normalized dataset is valid")
}

/// Rows sampled as base users (`base_raw`) and the rest held out for replay (`eval`).
#[derive(Debug, Clone)]
pub struct CorpusSplit {
    /// `k` rows; row `r` is original user `base_row_ids[r]`.
    pub base_raw: RatingDataset,
    /// Remaining rows; row `r` is original user `eval_row_ids[r]`.
    pub eval: RatingDataset,
    pub base_row_ids: Vec<usize>,
    pub eval_row_ids: Vec<usize>,
}

/// Samples `k` base rows uniformly without replacement.
pub fn split_base_eval(d: &RatingDataset, k: usize, seed: u64) -> Result<CorpusSplit> {
    if k == 0 || k >= d.n_users {
        return Err(DatasetError::BaseSize {
            k,
            n_users: d.n_users,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_row_ids = sorted_sample(&mut rng, d.n_users, k);
    let mut is_base = vec![false; d.n_users];
    for &u in &base_row_ids {
        is_base[u] = true;
    }
    let eval_row_ids: Vec<usize> = (0..d.n_users).filter(|&u| !is_base[u]).collect();
    Ok(CorpusSplit {
        base_raw: d.restrict_users(&base_row_ids)?,
        eval: d.restrict_users(&eval_row_ids)?,
        base_row_ids,
        eval_row_ids,
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Loads a `UserID::MovieID::Rating::Timestamp` file.
pub fn load_movielens(path: impl AsRef<Path>) -> Result<RatingDataset> {
    let path = path.as_ref();
    parse_movielens(open(path)?).map_err(|e| with_path(e, path))
}

/// Loads a `user,item,rating` file; a header line is skipped when its first field is not numeric.
pub fn load_csv_triples(path: impl AsRef<Path>, scale_max: f64) -> Result<RatingDataset> {
    let path = path.as_ref();
    parse_csv_triples(open(path)?, scale_max).map_err(|e| with_path(e, path))
}

fn with_path(e: DatasetError, path: &Path) -> DatasetError {
    match e {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    }
}

struct RawRating {
    line: usize,
    user: u64,
    item: u64,
    rating: f64,
}

/// MovieLens ids are 1-based: users are compacted in id order, items keep
/// their id space shifted to 0-based so unrated ids stay as arms.
pub fn parse_movielens(reader: impl BufRead) -> Result<RatingDataset> {
    const SCALE: f64 = 5.0;
    let mut raw = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(malformed(
                lineno,
                format!("expected 4 '::' fields, found {}", fields.len()),
            ));
        }
        let user = parse_field::<u64>(fields[0], lineno, "user id")?;
        let item = parse_field::<u64>(fields[1], lineno, "movie id")?;
        let rating = parse_field::<f64>(fields[2], lineno, "rating")?;
        parse_field::<i64>(fields[3], lineno, "timestamp")?;
        if item == 0 {
            return Err(malformed(lineno, "movie ids start at 1".into()));
        }
        check_rating(rating, SCALE, lineno)?;
        raw.push(RawRating {
            line: lineno,
            user,
            item: item - 1,
            rating,
        });
    }
    assemble(raw, SCALE)
}

pub fn parse_csv_triples(reader: impl BufRead, scale_max: f64) -> Result<RatingDataset> {
    if !(scale_max.is_finite() && scale_max > 0.0) {
        return Err(DatasetError::InvalidScale(scale_max));
    }
    let mut raw = Vec::new();
    let mut seen_content = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_content {
            seen_content = true;
            if fields[0].parse::<f64>().is_err() {
                continue;
            }
        }
        if fields.len() != 3 {
            return Err(malformed(
                lineno,
                format!("expected 3 comma-separated fields, found {}", fields.len()),
            ));
        }
        let user = parse_field::<u64>(fields[0], lineno, "user id")?;
        let item = parse_field::<u64>(fields[1], lineno, "item id")?;
        let rating = parse_field::<f64>(fields[2], lineno, "rating")?;
        check_rating(rating, scale_max, lineno)?;
        raw.push(RawRating {
            line: lineno,
            user,
            item,
            rating,
        });
    }
    assemble(raw, scale_max)
}

fn check_rating(rating: f64, scale_max: f64, line: usize) -> Result<()> {
    if rating.is_finite() && (0.0..=scale_max).contains(&rating) {
        Ok(())
    } else {
        Err(DatasetError::RatingOutOfRange {
            line,
            rating,
            scale_max,
        })
    }
}

fn assemble(raw: Vec<RawRating>, scale_max: f64) -> Result<RatingDataset> {
    if raw.is_empty() {
        return Err(DatasetError::NoRatings);
    }
    let mut by_pair: BTreeMap<(u64, u64), (usize, f64)> = BTreeMap::new();
    let mut duplicates = 0usize;
    for r in raw {
        if by_pair
            .insert((r.user, r.item), (r.line, r.rating))
            .is_some()
        {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate (user, item) ratings; kept the last occurrence");
    }
    let mut user_ids: Vec<u64> = by_pair.keys().map(|&(u, _)| u).collect();
    user_ids.dedup();
    let n_items = by_pair.keys().map(|&(_, i)| i).max().map_or(0, |m| m + 1);
    let n_items = usize::try_from(n_items).map_err(|_| DatasetError::Malformed {
        line: 0,
        reason: "item id too large".into(),
    })?;

    let mut triples = Vec::with_capacity(by_pair.len());
    let mut row = 0usize;
    let mut current = None;
    for ((user, item), (_, rating)) in by_pair {
        if current != Some(user) {
            if current.is_some() {
                row += 1;
            }
            current = Some(user);
        }
        triples.push(RatingTriple {
            user: row,
            item: item as usize,
            rating,
        });
    }
    RatingDataset::new(user_ids.len(), n_items, triples, scale_max)
}

fn parse_field<T: FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| malformed(line, format!("bad {what} '{s}'")))
}

fn malformed(line: usize, reason: String) -> DatasetError {
    DatasetError::Malformed { line, reason }
}

fn io_err(source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: PathBuf::new(),
        source,
    }
}

/// Writes the canonical `user,item,rating` format (0-based ids, with header).
pub fn write_csv_triples(d: &RatingDataset, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "user,item,rating")?;
    for t in &d.triples {
        writeln!(w, "{},{},{}", t.user, t.item, t.rating)?;
    }
    w.flush()
}

pub fn save_csv_triples(d: &RatingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    write_csv_triples(d, BufWriter::new(file)).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(user: usize, item: usize, rating: f64) -> RatingTriple {
        RatingTriple { user, item, rating }
    }

    fn ten_users() -> RatingDataset {
        let triples = (0..10)
            .map(|u| triple(u, u % 3, 1.0 + (u % 5) as f64))
            .collect();
        RatingDataset::new(10, 3, triples, 5.0).unwrap()
    }

    #[test]
    fn movielens_two_lines() {
        let d = parse_movielens("1::10::5::978300760\n1::12::3::978300760\n".as_bytes()).unwrap();
        assert_eq!(d.n_users(), 1);
        let items: Vec<usize> = d.triples().iter().map(|t| t.item).collect();
        let ratings: Vec<f64> = d.triples().iter().map(|t| t.rating).collect();
        assert_eq!(items, vec![9, 11]);
        assert_eq!(ratings, vec![5.0, 3.0]);
        assert_eq!(d.len(), 2);
        assert_eq!(d.scale_max(), 5.0);
    }

    #[test]
    fn movielens_compacts_users() {
        let d = parse_movielens("7::1::4::0\n3::2::2::0\n".as_bytes()).unwrap();
        assert_eq!(d.n_users(), 2);
        // user 3 sorts first
        assert_eq!(d.user_ratings(0)[0].item, 1);
        assert_eq!(d.user_ratings(1)[0].item, 0);
    }

    #[test]
    fn movielens_empty_is_error() {
        assert!(matches!(
            parse_movielens("".as_bytes()),
            Err(DatasetError::NoRatings)
        ));
        assert_eq!(
            parse_movielens("\n\n".as_bytes()).unwrap_err().to_string(),
            "no ratings"
        );
    }

    #[test]
    fn movielens_malformed_names_line() {
        let err = parse_movielens("1::1::5::0\n1::x::5::0\n".as_bytes()).unwrap_err();
        assert!(
            matches!(err, DatasetError::Malformed { line: 2, .. }),
            "{err}"
        );
        let err = parse_movielens("1::1::5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Malformed { line: 1, .. }));
    }

    #[test]
    fn duplicates_keep_last() {
        let d = parse_movielens("1::1::5::0\n1::1::2::0\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.triples()[0].rating, 2.0);
    }

    #[test]
    fn csv_single_triple_and_header() {
        let d = parse_csv_triples("0,0,4.0\n".as_bytes(), 5.0).unwrap();
        assert_eq!(d.triples(), &[triple(0, 0, 4.0)]);
        let d = parse_csv_triples("user,item,rating\n0,1,4.0\n".as_bytes(), 5.0).unwrap();
        assert_eq!(d.triples(), &[triple(0, 1, 4.0)]);
        assert_eq!(d.n_items(), 2);
    }

    #[test]
    fn csv_rating_out_of_range() {
        let err = parse_csv_triples("0,0,7\n".as_bytes(), 5.0).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::RatingOutOfRange { line: 1, .. }
        ));
        assert!(parse_csv_triples("0,0,-1\n".as_bytes(), 5.0).is_err());
    }

    #[test]
    fn normalize_divides_by_ceiling() {
        let d = RatingDataset::new(
            1,
            3,
            vec![triple(0, 0, 5.0), triple(0, 1, 0.0), triple(0, 2, 3.0)],
            5.0,
        )
        .unwrap();
        let n = normalize(&d);
        let r: Vec<f64> = n.triples().iter().map(|t| t.rating).collect();
        assert_eq!(r, vec![1.0, 0.0, 0.6]);
        assert_eq!(n.scale_max(), 1.0);
    }

    #[test]
    fn split_rejects_k_too_large() {
        let d = ten_users();
        assert!(matches!(
            split_base_eval(&d, 10, 1),
            Err(DatasetError::BaseSize { .. })
        ));
        assert!(split_base_eval(&d, 0, 1).is_err());
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let d = ten_users();
        let a = split_base_eval(&d, 3, 42).unwrap();
        let b = split_base_eval(&d, 3, 42).unwrap();
        assert_eq!(a.base_row_ids, b.base_row_ids);
        assert_eq!(a.base_raw.n_users(), 3);
        assert_eq!(a.eval.n_users(), 7);
        let mut all: Vec<usize> = a
            .base_row_ids
            .iter()
            .chain(&a.eval_row_ids)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn orient_new_item_transposes() {
        let d = RatingDataset::new(2, 3, vec![triple(0, 2, 1.0), triple(1, 0, 2.0)], 5.0).unwrap();
        assert_eq!(orient(&d, ProblemKind::NewUser), d);
        let t = orient(&d, ProblemKind::NewItem);
        assert_eq!((t.n_users(), t.n_items()), (3, 2));
        assert_eq!(t.triples(), &[triple(0, 1, 2.0), triple(2, 0, 1.0)]);
        assert_eq!(orient(&t, ProblemKind::NewItem), d);
    }

    #[test]
    fn dataset_rejects_duplicates_and_bad_ids() {
        assert!(matches!(
            RatingDataset::new(1, 1, vec![triple(0, 0, 1.0), triple(0, 0, 2.0)], 5.0),
            Err(DatasetError::DuplicatePair { user: 0, item: 0 })
        ));
        assert!(matches!(
            RatingDataset::new(1, 1, vec![triple(0, 1, 1.0)], 5.0),
            Err(DatasetError::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn subsample_caps_both_sides() {
        let triples = (0..50)
            .flat_map(|u| {
                (0..20)
                    .filter(move |i| (u + i) % 3 == 0)
                    .map(move |i| triple(u, i, 3.0))
            })
            .collect();
        let d = RatingDataset::new(50, 20, triples, 5.0).unwrap();
        let s = d.subsample(Some(10), Some(8), 5).unwrap();
        assert_eq!(s.n_items(), 8);
        assert_eq!(s.n_users(), 10);
        assert!((0..10).all(|u| s.user_rating_count(u) > 0));
        assert_eq!(s, d.subsample(Some(10), Some(8), 5).unwrap());
    }

    #[test]
    fn min_ratings_filter() {
        let d = RatingDataset::new(
            3,
            2,
            vec![triple(0, 0, 1.0), triple(0, 1, 1.0), triple(2, 0, 1.0)],
            5.0,
        )
        .unwrap();
        let f = d.filter_min_ratings(2).unwrap();
        assert_eq!(f.n_users(), 1);
        assert_eq!(d.filter_min_ratings(1).unwrap().n_users(), 2);
    }
}
