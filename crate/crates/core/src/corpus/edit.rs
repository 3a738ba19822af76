//! Character-level alignment between a source string and an edited copy.
//!
//! Both text normalization and speaker substitution rewrite utterances, and
//! gold trigger spans must follow those rewrites. An [`EditedText`] records the
//! result as a sequence of segments, each either copied verbatim or replaced.

use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Segment {
    src: Range<usize>,
    dst: Range<usize>,
    verbatim: bool,
}

/// Output text plus the segment alignment back to its source (char offsets).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditedText {
    text: String,
    segments: Vec<Segment>,
    src_len: usize,
    dst_len: usize,
}

impl EditedText {
    /// Identity edit.
    pub fn unchanged(text: &str) -> Self {
        let mut builder = EditBuilder::default();
        builder.keep(text);
        builder.finish()
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn into_text(self) -> String {
        self.text
    }

    /// True when no segment was replaced.
    pub fn is_identity(&self) -> bool {
        self.segments.iter().all(|s| s.verbatim)
    }

    /// Number of replaced segments whose content actually changed.
    pub fn replacements(&self) -> usize {
        self.segments.iter().filter(|s| !s.verbatim).count()
    }

    /// Maps a source char range onto the edited text.
    ///
    /// Offsets inside verbatim segments move by the segment shift; an endpoint
    /// that lands inside a replaced segment snaps outward to cover the whole
    /// replacement.
    pub fn map_span(&self, span: Range<usize>) -> Option<Range<usize>> {
        if span.start >= span.end || span.end > self.src_len {
            return None;
        }
        let start = self
            .segments
            .iter()
            .find(|s| s.src.start <= span.start && span.start < s.src.end)
            .map(|s| {
                if s.verbatim {
                    s.dst.start + (span.start - s.src.start)
                } else {
                    s.dst.start
                }
            })?;
        let end = self
            .segments
            .iter()
            .find(|s| s.src.start < span.end && span.end <= s.src.end)
            .map(|s| {
                if s.verbatim {
                    s.dst.start + (span.end - s.src.start)
                } else {
                    s.dst.end
                }
            })?;
        (start < end && end <= self.dst_len).then_some(start..end)
    }
}

/// Incremental construction of an [`EditedText`].
#[derive(Debug, Default)]
pub(crate) struct EditBuilder {
    text: String,
    segments: Vec<Segment>,
    src_pos: usize,
    dst_pos: usize,
}

impl EditBuilder {
    pub(crate) fn keep(&mut self, piece: &str) {
        self.push(piece, piece, true);
    }

    pub(crate) fn replace(&mut self, original: &str, replacement: &str) {
        if original == replacement {
            self.keep(original);
        } else {
            self.push(original, replacement, false);
        }
    }

    fn push(&mut self, original: &str, replacement: &str, verbatim: bool) {
        let src_len = original.chars().count();
        let dst_len = replacement.chars().count();
        if src_len == 0 && dst_len == 0 {
            return;
        }
        let src = self.src_pos..self.src_pos + src_len;
        let dst = self.dst_pos..self.dst_pos + dst_len;
        // merge adjacent verbatim runs so lookups stay short
        match self.segments.last_mut() {
            Some(last) if verbatim && last.verbatim => {
                last.src.end = src.end;
                last.dst.end = dst.end;
            }
            _ => self.segments.push(Segment { src, dst, verbatim }),
        }
        self.text.push_str(replacement);
        self.src_pos += src_len;
        self.dst_pos += dst_len;
    }

    pub(crate) fn finish(self) -> EditedText {
        EditedText {
            text: self.text,
            segments: self.segments,
            src_len: self.src_pos,
            dst_len: self.dst_pos,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(parts: &[(&str, &str)]) -> EditedText {
        let mut b = EditBuilder::default();
        for (o, r) in parts {
            b.replace(o, r);
        }
        b.finish()
    }

    #[test]
    fn identity_maps_spans_to_themselves() {
        let e = EditedText::unchanged("hello world");
        assert!(e.is_identity());
        assert_eq!(e.map_span(6..11), Some(6..11));
        assert_eq!(e.map_span(0..0), None);
        assert_eq!(e.map_span(3..20), None);
    }

    #[test]
    fn spans_shift_past_replacements() {
        // "I'm engaged" -> "I am engage"
        let e = build(&[("I'm", "I am"), (" ", " "), ("engaged", "engage")]);
        assert_eq!(e.text(), "I am engage");
        assert_eq!(e.replacements(), 2);
        // whole replaced word
        assert_eq!(e.map_span(4..11), Some(5..11));
        // partial word snaps to the whole replacement
        assert_eq!(e.map_span(5..8), Some(5..11));
        assert_eq!(e.map_span(0..3), Some(0..4));
    }

    #[test]
    fn verbatim_runs_merge() {
        let e = build(&[("a", "a"), ("b", "b"), ("c", "xyz"), ("d", "d")]);
        assert_eq!(e.segments.len(), 3);
        assert_eq!(e.map_span(3..4), Some(5..6));
    }
}
