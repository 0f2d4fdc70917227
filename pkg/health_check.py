#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import httpx
import sys
from config import HOST, PORT

def check_health(base_url=None, client=None):
    base_url = base_url or f"http://{HOST}:{PORT}"
    try:
        if client is None:
            response = httpx.get(f"{base_url}/status", timeout=10)
        else:
            response = client.get("/status")
        if response.status_code == 200:
            data = response.json()
            print('✅ QNG depth service is healthy')
            print(f'Version: {data.get("version")}')
            print(f'Recorded runs: {len(data.get("recent_runs", []))}')
            return True
        else:
            print(f'❌ Service responded with status: {response.status_code}')
            return False
    except Exception as e:
        print(f'❌ Service is not responding: {e}')
        return False

if __name__ == '__main__':
    if check_health():
        sys.exit(0)
    else:
        sys.exit(1)
