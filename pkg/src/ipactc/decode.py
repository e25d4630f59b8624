"""Greedy best-path decoding and label-error-rate scoring.

The decoder takes the per-frame argmax (ties go to the lowest index, so
blank wins a uniform row) and collapses the path.  Scoring is plain
Levenshtein with unit costs; when several minimal alignments exist the
counts prefer substitution over deletion over insertion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctc import collapse_path


@dataclass(frozen=True)
class ErrorCounts:
    substitutions: int
    insertions: int
    deletions: int
    reference_length: int

    @property
    def distance(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def greedy_decode(log_probs: np.ndarray, allowed_indices=None) -> list[int]:
    """Per-frame argmax, then collapse repeats and blanks.

    allowed_indices restricts the argmax to a symbol subset (the greedy
    stand-in for a language-specific decoding graph); blank must be in it.
    """
    lp = np.asarray(log_probs)
    if lp.ndim != 2:
        raise ValueError(f"log_probs must be T x V, got shape {lp.shape}")
    if allowed_indices is None:
        path = np.argmax(lp, axis=1)
    else:
        allowed = np.asarray(sorted(set(int(i) for i in allowed_indices)))
        if allowed.size == 0 or allowed[0] != 0:
            raise ValueError("allowed_indices must include the blank index 0")
        path = allowed[np.argmax(lp[:, allowed], axis=1)]
    return collapse_path(path)


def edit_distance(reference, hypothesis) -> ErrorCounts:
    """Minimal-cost alignment counts between two label sequences."""
    ref = list(reference)
    hyp = list(hypothesis)
    R, H = len(ref), len(hyp)
    # cell: (cost, substitutions, insertions, deletions)
    prev = [(j, 0, j, 0) for j in range(H + 1)]
    for i in range(1, R + 1):
        cur = [(i, 0, 0, i)]
        for j in range(1, H + 1):
            sub_cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            d = prev[j - 1]
            diag = (d[0] + sub_cost, d[1] + sub_cost, d[2], d[3])
            u = prev[j]
            up = (u[0] + 1, u[1], u[2], u[3] + 1)  # deletion: ref symbol dropped
            l = cur[j - 1]
            left = (l[0] + 1, l[1], l[2] + 1, l[3])  # insertion: extra hyp symbol
            best = diag  # tie preference: substitution/match, deletion, insertion
            if up[0] < best[0]:
                best = up
            if left[0] < best[0]:
                best = left
            cur.append(best)
        prev = cur
    cost, subs, ins, dels = prev[H]
    assert cost == subs + ins + dels
    return ErrorCounts(
        substitutions=subs, insertions=ins, deletions=dels, reference_length=R
    )


def label_error_rate(pairs) -> float:
    """100 * total edit distance / total reference length over (ref, hyp) pairs."""
    total_dist = 0
    total_ref = 0
    for ref, hyp in pairs:
        counts = edit_distance(ref, hyp)
        total_dist += counts.distance
        total_ref += counts.reference_length
    if total_ref == 0:
        raise ValueError("total reference length is zero")
    return 100.0 * total_dist / total_ref


def write_decode_output(path, items) -> None:
    """One line per utterance: id, tab, space-separated symbols."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for utt_id, symbols in items:
            f.write(f"{utt_id}\t{' '.join(symbols)}\n")


def read_decode_output(path) -> dict[str, list[str]]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            utt_id, _, text = line.partition("\t")
            out[utt_id] = text.split()
    return out


def write_score_report(path, per_language: dict[str, float], overall: float) -> None:
    """Per-language and overall LER, tab-separated."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("language\tler\n")
        for lang in sorted(per_language):
            f.write(f"{lang}\t{per_language[lang]:.4f}\n")
        f.write(f"overall\t{overall:.4f}\n")
