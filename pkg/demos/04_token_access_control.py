"""
Token-mediated access to the secure store
=========================================

An APP authenticates, receives a token, and writes and reads secure data
through the ATP.  A TA accesses the same store directly.  Stale and expired
tokens are refused before any data moves.
"""

import numpy as np

from truspy_sim.atp import (
    ATP,
    Role,
    SecureStore,
    SubjectIdentity,
    UnconstrainedItem,
    default_registry,
    dump_hex,
    ta_direct_access,
    tp_mask,
)
from truspy_sim.errors import TokenInvalid

ta = SubjectIdentity("ta", Role.TA)
app = SubjectIdentity("wallet-app", Role.APP, credential=b"1234")
atp = ATP(SecureStore(), default_registry(), ta, np.random.default_rng(42))

session = atp.authenticate_subject(app, b"1234")
token = atp.issue_token(session, ttl=10)
print("token expires at tick", token.expires_at)

secret = b"card number 4111-1111"
udi = UnconstrainedItem(tp_mask(secret, token), token)  # the APP masks before sending
atp.write_secure(app, token, udi, 0x1000)
masked = atp.read_secure(app, token, 0x1000)
print("read back:", tp_mask(masked, token))

ta_direct_access(ta, 0x1020, atp.store, b"TA-owned record")
print(dump_hex(atp.store), end="")

###############################################################################
# Refusals

fresh = atp.issue_token(session, ttl=10)
for label, presented in (("stale token", token), ("no token", None)):
    try:
        atp.read_secure(app, presented, 0x1000)
    except TokenInvalid as exc:
        print(label, "->", exc.reason.value)
atp.store.advance(10)
try:
    atp.read_secure(app, fresh, 0x1000)
except TokenInvalid as exc:
    print("after ttl ->", exc.reason.value)
