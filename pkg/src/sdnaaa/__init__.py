"""SDN-style management of AAA infrastructures: a controller that provisions
peer tables, security credentials and realm routing tables on AAA nodes over
a NETCONF-like channel, plus a deterministic event-loop simulator around it.
"""

__version__ = "0.1.0"
