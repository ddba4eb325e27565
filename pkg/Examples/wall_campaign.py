"""
Standing-obstacle campaign in the three modes. The sample-based campaign only sees collisions, the formal one
separates the cells where no braking could avoid the obstacle.
"""

from pyScenarioCoverage import CampaignMode, coverage_report, load_config, run_campaign

cfg = load_config("wall.yaml")

for mode in (CampaignMode.SampleBased, CampaignMode.Formal, CampaignMode.Mixed):
    ledger = run_campaign(
        cfg.space, cfg.resolution, cfg.spec, cfg.policy, mode, cfg.episode, cfg.engine, config_hash=cfg.hash
    )
    report = coverage_report(ledger)
    print(f"{mode.value}: {report.counts}")
    print(f"  safe coverage {report.safe_coverage:.3f}, penetration rate {report.penetration_rate}")

# the cell centered on 9.5 m collides, but no admissible control could have avoided it
print(ledger.entries[(9,)].to_dict())
