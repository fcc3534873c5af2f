from .scenario.cli import main

raise SystemExit(main())
