from bridgescope.cli import main

raise SystemExit(main())
