# Configure Django for pytest the same way runtests.py does.
import django
from django.conf import settings

if not settings.configured:
    settings.configure(
        DEBUG=True,
        USE_TZ=True,
        INSTALLED_APPS=[
            "mobility_synth",
        ],
        MOBILITY_SYNTH={
            'THREADS': 1,
        },
    )
    django.setup()
