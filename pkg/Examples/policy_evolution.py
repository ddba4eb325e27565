"""
Three successive designs of the braking policy on the standing-obstacle space, compared in an evolution report.
"""

from pyScenarioCoverage import Policy, load_config, run_evolution

cfg = load_config("wall.yaml")
designs = [
    Policy("v1_no_brake", law="zero"),
    Policy("v2_late_brake", law="threshold_brake", params={"a_max": 5.0, "margin": -2.0}),
    Policy("v3_brake", law="threshold_brake", params={"a_max": 5.0, "margin": 1.0}),
]
ledgers, report = run_evolution(cfg.space, cfg.resolution, cfg.spec, designs, "SampleBased", cfg.episode, cfg.engine)

for iteration in report.iterations:
    print(f"{iteration['policy']}: {iteration['counts']['UnsafeObserved']} failing cells")
print(f"monotone: {report.monotone}, converged: {report.converged}")
print(f"cells left to redesign: {report.target_cells}")
