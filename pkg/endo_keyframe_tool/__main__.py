import sys

from endo_keyframe_tool.cli import main

sys.exit(main())
