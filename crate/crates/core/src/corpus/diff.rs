use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Context,
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffLine {
    pub kind: LineKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    /// Text after the closing `@@`, usually the enclosing function.
    pub section: String,
    pub lines: Vec<DiffLine>,
}

impl Hunk {
    /// Lines of the pre-change file covered by this hunk.
    pub fn old_lines(&self) -> impl Iterator<Item = &str> {
        self.lines
            .iter()
            .filter(|l| l.kind != LineKind::Added)
            .map(|l| l.text.as_str())
    }

    /// Lines of the post-change file covered by this hunk.
    pub fn new_lines(&self) -> impl Iterator<Item = &str> {
        self.lines
            .iter()
            .filter(|l| l.kind != LineKind::Removed)
            .map(|l| l.text.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiffPatch {
    pub hunks: Vec<Hunk>,
}

impl DiffPatch {
    pub fn added(&self) -> usize {
        self.count(LineKind::Added)
    }

    pub fn removed(&self) -> usize {
        self.count(LineKind::Removed)
    }

    fn count(&self, kind: LineKind) -> usize {
        self.hunks
            .iter()
            .flat_map(|h| &h.lines)
            .filter(|l| l.kind == kind)
            .count()
    }
}

fn is_file_header(line: &str) -> bool {
    const PREFIXES: [&str; 12] = [
        "diff ",
        "index ",
        "--- ",
        "+++ ",
        "new file mode",
        "deleted file mode",
        "old mode",
        "new mode",
        "similarity index",
        "rename from",
        "rename to",
        "Binary files",
    ];
    PREFIXES.iter().any(|p| line.starts_with(p))
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    match s.split_once(',') {
        Some((start, len)) => Some((start.parse().ok()?, len.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

/// Parses `@@ -a[,b] +c[,d] @@ section`.
fn parse_header(line: &str) -> Option<(usize, usize, usize, usize, String)> {
    let rest = line.strip_prefix("@@ ")?;
    let close = rest.find(" @@")?;
    let (ranges, tail) = rest.split_at(close);
    let section = tail[3..].trim_start().to_string();
    let mut parts = ranges.split_whitespace();
    let old = parts.next()?.strip_prefix('-')?;
    let new = parts.next()?.strip_prefix('+')?;
    if parts.next().is_some() {
        return None;
    }
    let (old_start, old_len) = parse_range(old)?;
    let (new_start, new_len) = parse_range(new)?;
    Some((old_start, old_len, new_start, new_len, section))
}

/// Parses hunk-level unified diff text.
///
/// File headers (`diff --git`, `---`/`+++`, `index` ...) between hunks are
/// accepted and reset the ordering check; `\ No newline at end of file`
/// markers are ignored. An empty body line counts as an empty context line.
pub fn parse_unified_diff(patch: &str) -> Result<DiffPatch, CorpusError> {
    let err = |line: usize, reason: String| CorpusError::DiffSyntax { line, reason };

    let mut hunks: Vec<Hunk> = Vec::new();
    let mut lines = patch.lines().enumerate().peekable();
    let mut last_old_start: Option<usize> = None;

    while let Some((idx, raw)) = lines.next() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');

        if line.starts_with("@@") {
            let (old_start, old_len, new_start, new_len, section) =
                parse_header(line).ok_or_else(|| err(line_no, format!("malformed hunk header `{line}`")))?;
            if let Some(prev) = last_old_start {
                if old_start < prev {
                    return Err(err(
                        line_no,
                        format!("hunk starts at old line {old_start}, before previous hunk at {prev}"),
                    ));
                }
            }
            last_old_start = Some(old_start);

            let mut hunk = Hunk {
                old_start,
                old_len,
                new_start,
                new_len,
                section,
                lines: Vec::new(),
            };
            let (mut old_seen, mut new_seen) = (0usize, 0usize);
            while old_seen < old_len || new_seen < new_len {
                let Some((body_idx, body_raw)) = lines.next() else {
                    return Err(err(
                        line_no,
                        format!(
                            "hunk ended early: header claims -{old_len} +{new_len}, found -{old_seen} +{new_seen}"
                        ),
                    ));
                };
                let body = body_raw.trim_end_matches('\r');
                let (kind, text) = match body.chars().next() {
                    Some(' ') => (LineKind::Context, &body[1..]),
                    None => (LineKind::Context, ""),
                    Some('+') => (LineKind::Added, &body[1..]),
                    Some('-') => (LineKind::Removed, &body[1..]),
                    Some('\\') => continue,
                    Some(_) => {
                        return Err(err(
                            body_idx + 1,
                            format!(
                                "unexpected line in hunk body; header claims -{old_len} +{new_len}, found -{old_seen} +{new_seen}"
                            ),
                        ))
                    }
                };
                match kind {
                    LineKind::Context => {
                        old_seen += 1;
                        new_seen += 1;
                    }
                    LineKind::Removed => old_seen += 1,
                    LineKind::Added => new_seen += 1,
                }
                if old_seen > old_len || new_seen > new_len {
                    return Err(err(
                        body_idx + 1,
                        format!("hunk body exceeds header counts -{old_len} +{new_len}"),
                    ));
                }
                hunk.lines.push(DiffLine {
                    kind,
                    text: text.to_string(),
                });
            }
            hunks.push(hunk);
            continue;
        }

        if line.starts_with('\\') || line.trim().is_empty() {
            continue;
        }
        if is_file_header(line) {
            if line.starts_with("diff ") || line.starts_with("--- ") {
                last_old_start = None;
            }
            continue;
        }
        let reason = if hunks.is_empty() {
            format!("expected hunk header, found `{line}`")
        } else {
            "line outside any hunk; counts disagree with the preceding header".to_string()
        };
        return Err(err(line_no, reason));
    }

    if hunks.is_empty() {
        return Err(err(0, "no hunk header found".into()));
    }
    Ok(DiffPatch { hunks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_hunk() {
        let p = parse_unified_diff("@@ -1,1 +1,1 @@\n-old\n+new").unwrap();
        assert_eq!(p.hunks.len(), 1);
        let h = &p.hunks[0];
        assert_eq!((h.old_len, h.new_len), (1, 1));
        assert_eq!(h.old_lines().collect::<Vec<_>>(), vec!["old"]);
        assert_eq!(h.new_lines().collect::<Vec<_>>(), vec!["new"]);
    }

    #[test]
    fn short_body_is_a_syntax_error() {
        let e = parse_unified_diff("@@ -1,1 +1,2 @@\n-old\n+new\n").unwrap_err();
        assert!(matches!(e, CorpusError::DiffSyntax { .. }), "{e}");
    }

    #[test]
    fn excess_body_is_a_syntax_error() {
        let e = parse_unified_diff("@@ -1,1 +1,1 @@\n-old\n+new\n+extra\n").unwrap_err();
        assert!(matches!(e, CorpusError::DiffSyntax { line: 4, .. }), "{e}");
    }

    #[test]
    fn malformed_header() {
        for bad in ["@@ -x +1 @@\n", "@@ -1 @@\n", "@@ 1 2 @@\n", "hello\n"] {
            assert!(parse_unified_diff(bad).is_err(), "{bad:?}");
        }
        assert!(parse_unified_diff("").is_err());
    }

    #[test]
    fn omitted_lengths_default_to_one_and_section_is_kept() {
        let p = parse_unified_diff("@@ -3 +3 @@ fn main() {\n-a\n+b\n").unwrap();
        let h = &p.hunks[0];
        assert_eq!((h.old_start, h.old_len, h.new_start, h.new_len), (3, 1, 3, 1));
        assert_eq!(h.section, "fn main() {");
    }

    #[test]
    fn no_newline_marker_is_ignored() {
        let text = "@@ -1,2 +1,2 @@\n a\n-b\n\\ No newline at end of file\n+c\n\\ No newline at end of file\n";
        let p = parse_unified_diff(text).unwrap();
        assert_eq!(p.hunks[0].lines.len(), 3);
    }

    #[test]
    fn empty_body_line_is_context() {
        let p = parse_unified_diff("@@ -1,3 +1,3 @@\n a\n\n-b\n+c\n").unwrap();
        assert_eq!(p.hunks[0].lines[1].kind, LineKind::Context);
        assert_eq!(p.hunks[0].lines[1].text, "");
    }

    #[test]
    fn hunks_must_not_go_backwards_within_a_file() {
        let text = "@@ -10,1 +10,1 @@\n-a\n+b\n@@ -2,1 +2,1 @@\n-c\n+d\n";
        assert!(parse_unified_diff(text).is_err());
    }

    #[test]
    fn file_headers_reset_ordering() {
        let text = "diff --git a/x b/x\n--- a/x\n+++ b/x\n@@ -10,1 +10,1 @@\n-a\n+b\n\
                    diff --git a/y b/y\n--- a/y\n+++ b/y\n@@ -2,1 +2,1 @@\n-c\n+d\n";
        let p = parse_unified_diff(text).unwrap();
        assert_eq!(p.hunks.len(), 2);
        assert_eq!((p.added(), p.removed()), (2, 2));
    }

    #[test]
    fn removed_line_starting_with_dashes_is_body_not_header() {
        // "--- x" inside a hunk body is a removed line "-- x".
        let p = parse_unified_diff("@@ -1,1 +1,1 @@\n--- x\n+++ y\n").unwrap();
        assert_eq!(p.hunks[0].lines[0].text, "-- x");
        assert_eq!(p.hunks[0].lines[1].text, "++ y");
    }
}
