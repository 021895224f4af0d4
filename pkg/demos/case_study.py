"""Step through the office-building case study one tick at a time.

Run with ``python3 demos/case_study.py``.
"""
import json

from tokengov.harness import Simulation, bundled_scenario_path, load_scenario


def main():
    sim = Simulation(load_scenario(bundled_scenario_path("case_study_happy")))
    request_seen = 0
    for tick in range(sim.scenario.last_tick + 1):
        before = len(sim.ledger)
        sim.step(tick)
        print(f"tick {tick}")
        req = sim.network.requests.get("OFFICE_X")
        if req is not None:
            for _, state in req.trace()[request_seen:]:
                print(f"  request  {state}")
            request_seen = len(req.trace())
        for ev in sim.ledger.events[before:]:
            if ev.kind.value in ("Mint", "Transfer", "TransferRejected", "WhitelistChange"):
                print(f"  ledger   #{ev.seq} {ev.kind.value} {json.dumps(ev.payload, default=dict)}")

    token = sim.ledger.tokens["OFFICE_X"]
    print()
    print(f"effective value  {req.effective_value / 100:,.2f} USD")
    print(f"token price      {token.initial_price} cents")
    for holder, amount in sorted(token.holdings.items()):
        print(f"  {holder:<14} {amount:>7}  ({amount * 100 / token.total_supply:.0f}%)")
    print(f"final hash       {sim.ledger.final_hash}")


if __name__ == "__main__":
    main()
