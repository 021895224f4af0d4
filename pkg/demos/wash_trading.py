"""Eve's round trips between her own wallets, and the governance response."""
from tokengov.harness import bundled_scenario_path, run_scenario


def main():
    report = run_scenario(bundled_scenario_path("wash_trading"))
    for r in report.reports:
        print(f"tick {r['tick']:>2}  report   {r['severity']} {r['classification']} on {r['subject']} by {r['agent_id']}")
    for a in report.actions:
        print(f"tick {a['tick']:>2}  action   {a['kind']} -> {a['target']}")
    for rej in report.rejected_transfers:
        print(f"tick {rej['tick']:>2}  rejected {rej['from']} -> {rej['to']} {rej['amount']} ({rej['reason']})")
    print()
    print(report.incidents_csv(), end="")


if __name__ == "__main__":
    main()
