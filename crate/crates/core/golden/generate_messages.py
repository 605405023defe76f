"""Writes golden/messages/*.json in canonical wire form.

Independent of the Rust encoder: key order and layout are spelled out here
so the conformance test checks the encoder against a second implementation.
"""
import json
import pathlib

ORDER = ["Method", "Result", "Message", "To Account", "From Account", "Amount",
         "PIN", "Time", "Date", "Timestamp", "Error"]
WHEN = {"Time": "1100 hours", "Date": "13-5-2012", "Timestamp": "2012-05-13T11:00:00Z"}


def canonical(fields):
    fields = dict(fields, **WHEN)
    if "Result" in fields:
        fields.setdefault("Error", "null")
    core = [(k, fields[k]) for k in ORDER if k in fields]
    extra = sorted((k, v) for k, v in fields.items() if k not in ORDER)
    body = ",\n".join(f"  {json.dumps(k)}: {json.dumps(v)}" for k, v in core + extra)
    return "{\n" + body + "\n}"


def workflow(prefix, to, frm, amount_on_entry, entry_ok, prompt, transmit_ok, failures):
    entry = {"To Account": to, "From Account": frm}
    if amount_on_entry:
        entry["Amount"] = "100"
    move = {"To Account": to, "From Account": frm, "Amount": "100"}
    out = {
        "01_enter_amount": {"Method": "EnterAmount", **entry},
        "02_enter_amount_response": {"Method": "EnterAmount", "Result": entry_ok, **entry},
        "03_enter_pin": {"Method": "EnterPIN", "Message": prompt},
        "04_enter_pin_response": {"Method": "EnterPIN", "Result": "PIN"},
        "05_verify_pin": {"Method": "VerifyPIN", "Message": "Verifying PIN entry"},
        "06_verify_pin_verified": {"Method": "VerifyPIN", "Result": "Verified"},
        "07_verify_pin_not_verified": {"Method": "VerifyPIN", "Result": "NotVerified",
                                       "Error": "Verification Unsuccessful"},
        "08_transmit": {"Method": "Transmit", **move},
        "09_transmit_ok": {"Method": "Transmit", "Result": transmit_ok, **move},
    }
    for i, (slug, error) in enumerate(failures, start=10):
        out[f"{i}_transmit_{slug}"] = {"Method": "Transmit", "Result": "NotTransmitted",
                                       **move, "Error": error}
    return {f"{prefix}_{k}": v for k, v in out.items()}


NOT_FOUND = ("account_not_found", "Account Not Found")
NO_CASH = ("not_enough_cash", "Account Has Not Enough Cash")

messages = {}
messages.update(workflow("potc", "Merchant", "User", True, "OK", "Please insert PIN:", "OK",
                         [NOT_FOUND, NO_CASH]))
messages.update(workflow("a2a", "User No.1", "User No.2", False, "Okay", "Please Enter PIN:",
                         "Transmission Successful", [NOT_FOUND, NO_CASH]))
messages.update(workflow("deposit", "User No.1", "currency detector", False, "Okay",
                         "Please Enter PIN:", "OK", [NOT_FOUND]))
messages.update(workflow("withdraw", "currency detector", "User No.1", False, "Okay",
                         "Please Enter PIN:", "OK", [NO_CASH]))

out = pathlib.Path(__file__).parent / "messages"
out.mkdir(exist_ok=True)
for name, fields in messages.items():
    (out / f"{name}.json").write_text(canonical(fields))
print(f"wrote {len(messages)} messages")
