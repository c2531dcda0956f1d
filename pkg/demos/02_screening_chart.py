"""
Screening new growth paths
==========================

A reference sample defines nested quantile contours of the first two
component scores. A new child's path is projected onto the components and
ranked by the smallest contour that contains its score pair.
"""

from pathlib import Path

import numpy as np

from growthpaths import Subject, build_chart, project_dataset, screen_subject
from growthpaths.simharness import fit_reference, generate, setting_spec
from growthpaths.svgplot import chart_svg, write_svg

out = Path("demo_output")
out.mkdir(exist_ok=True)

data, truth = generate(setting_spec("empirical", seed=2))
model = fit_reference(data)
scores, _ = project_dataset(data, model)
chart = build_chart(scores[:, :2])
print("chart center:", np.round(chart.center, 2))

# an ordinary path: mean growth plus median scores
times = np.array([9.3, 10.5, 11.8, 13.1, 14.6, 15.8])
mean, (phi1, phi2) = truth.mean_fn(times), truth.component_fns
s1, s2 = np.median(truth.scores, axis=0)
typical = Subject("typical", times, mean + s1 * phi1(times) + s2 * phi2(times))

# the same child with an unusually strong pubertal spurt
sd2 = truth.scores[:, 1].std()
spurt = Subject("spurt", times, mean + s1 * phi1(times) + (s2 + 5 * sd2) * phi2(times))

# a path that drifts away linearly from age 9
drift = Subject("drift", times, typical.values - 3.0 * (times - 9.0))

for s in (typical, spurt, drift):
    res = screen_subject(s, model, chart, level=0.95)
    rank = "beyond the top contour" if res.beyond_top else f"{res.rank:.3f}"
    print(f"{s.id:8s} scores={np.round(res.scores, 2)} rank={rank} flagged={res.flagged}")

highlight = screen_subject(spurt, model, chart).scores[:2]
write_svg(out / "chart.svg", chart_svg(chart, scores[:, :2], highlight=highlight))
print("chart written to", out / "chart.svg")
