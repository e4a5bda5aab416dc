"""
DTW baseline and the EER breakdown
==================================

Score every pair of a synthetic protocol with DTW, then compute EER per
forgery scenario.  The same steps are available as `sigvlm dtw` and
`sigvlm eval`.
"""

from sigvlm import breakdown, dtw_score, emit_report, synth_dataset
from sigvlm.evaluation import ScoreRow

ds = synth_dataset(seed=42, n_subjects=8)
print(len(ds.pairs), "pairs")

rows = []
for p in ds.pairs:
    s = dtw_score(ds.records[p.reference_path], ds.records[p.probe_path])
    rows.append(ScoreRow(p.pair_id, p.task, p.label, {"s_dtw": s}))

# mean similarity per label: genuine > skilled > random
for label in ("genuine", "skilled", "random"):
    vals = [r.scores["s_dtw"] for r in rows if r.label.value == label]
    print("%-8s %.3f" % (label, sum(vals) / len(vals)))

report = breakdown(rows, ["s_dtw"])
print(emit_report(report, "md").decode())

cell = report.cell("task1", "skilled", "s_dtw")
print("skilled EER %.2f%% at threshold %.4f" % (cell.eer, cell.eer_threshold))
print("first DET points:", [(round(d.fmr, 2), round(d.fnmr, 2)) for d in cell.det[:5]])
