"""
Overtaking a slow car with a kinematic bicycle ego, checked against the overtaking formula, then the liability
pipeline on a longitudinal cut-in.
"""

from pyScenarioCoverage import (
    AgentConfig,
    EgoConfig,
    EpisodeConfig,
    Policy,
    assess_liability,
    monitor_report,
    parse,
    roll_out,
)

overtaking = parse(
    "G[0,25] F[0,5] lane_return & ((safe U[0,25] overtake_done) | (safe U[0,25] stay_behind))"
)
episode = EpisodeConfig(
    duration=30.0,
    step=0.05,
    ego=EgoConfig(model="kinematic_bicycle", v=15.0),
    agents=(AgentConfig(gap=30.0, v=5.0),),
)
trace = roll_out(episode, Policy("pass", law="overtake"))
report = monitor_report(trace, overtaking)
print(f"Overtaking formula holds: {bool(report.values[0])} (truncated windows: {report.truncated})")
print(f"Minimum clearance: {trace.channel('clearance').min():.2f} m")

# A car cuts in 9 m ahead of an ego at 10 m/s: braking cannot avoid it.
cut_in = EpisodeConfig(duration=5.0, step=0.05, ego=EgoConfig(v=10.0), agents=(AgentConfig(gap=9.0, length=0.5),))
collision_free = parse("G[0,5] collision_free")
for policy in (Policy("brake", law="full_brake"), Policy("idle", law="zero")):
    finding = assess_liability(cut_in, policy, collision_free)
    print(f"{policy.name}: {finding.rationale.value}, at fault: {finding.at_fault}")
