"""Speaking-style authentication with HMMs and suprasegmental HMMs.

Modules, in pipeline order: :mod:`corpus` (WAV/manifest I/O, splits,
synthetic styled corpus), :mod:`features` (LPCC front end),
:mod:`prosody` (pitch/energy/duration), :mod:`hmm`, :mod:`sphmm`,
:mod:`auth` (accept/reject decisions), :mod:`evaluation` (protocol and
tables) and :mod:`cli`.
"""

__version__ = "0.1.0"
