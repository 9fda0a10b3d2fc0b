from multipose.cli import main

raise SystemExit(main())
