"""Smoke test for the cardpay extension module.

Build and install first:  pip install --no-build-isolation -e .
"""

import tempfile
from pathlib import Path

import cardpay

KEY = bytes(range(32)).hex()
NONCE = bytes(range(0xA0, 0xB0)).hex()


def main():
    # wire codec: a sloppy terminal message decodes to the canonical form
    env = cardpay.Envelope.decode(
        '{\n“Method”: “Transmit”,\n"Result": "NotTransmitted"\n'
        '"Amount": Rs. 100,\n"Error": "Account Not Found"\n}'
    )
    assert env.method == "Transmit"
    assert env.amount == "100"
    assert env.error == "Account Not Found"
    assert cardpay.Envelope.decode(env.encode()) == env

    # card MACs against independently computed values
    assert cardpay.card_mac(KEY, NONCE).startswith("b1489727")
    assert cardpay.card_mac(KEY, NONCE, "card").startswith("c3f9755c")
    assert cardpay.card_mac(KEY, NONCE, "server").startswith("8584e982")

    with tempfile.TemporaryDirectory() as tmp:
        store = Path(tmp) / "store"
        ledger = cardpay.Ledger(str(store))
        ledger.seed_demo()
        assert ledger.balance("User") == "120"

        run = ledger.run("potc", card="1", pin="1234", amount="100", to="Merchant")
        assert run.succeeded() and run.result == "OK", run
        assert [e.method for e in run.transcript][::2] == ["EnterAmount", "EnterPIN", "VerifyPIN", "Transmit"]
        assert cardpay.check_sequence(run.transcript) == []
        assert "1234" not in run.transcript_text()
        assert ledger.balance("User") == "20"

        run = ledger.run("a2a", card="1", pin="1234", amount="50", to="Merchant")
        assert (run.result, run.error) == ("NotTransmitted", "Account Has Not Enough Cash")
        run = ledger.run("potc", card="1", pin="0000", amount="10", to="Merchant")
        assert (run.result, run.error) == ("NotVerified", "Verification Unsuccessful")

        run = ledger.run("deposit", card="1", pin="1234", notes="100,50")
        assert run.succeeded() and ledger.balance("User") == "170"
        run = ledger.run("withdraw", card="1", pin="1234", amount="70")
        assert run.payout == "50,20" and ledger.balance("User") == "100"

        ledger.cancel("User", "Merchant", "100")
        assert ledger.balance("User") == "200"
        try:
            ledger.cancel("User", "Merchant", "100")
        except cardpay.CardpayError:
            pass
        else:
            raise AssertionError("second cancel accepted")

        assert ledger.total() == 0
        records, state = cardpay.replay(str(store / "journal.jsonl"))
        assert records == ledger.journal_len() and state == ledger.state_hash()

    print("cardpay smoke test passed")


if __name__ == "__main__":
    main()
