# s3_utils.py

import os

import boto3
import botocore.exceptions

from logger import logger


def get_s3_client():
    return boto3.client('s3')


def upload_file_to_s3(file_content, bucket, s3_key, s3_client=None):
    s3_client = s3_client or get_s3_client()
    try:
        s3_client.put_object(Bucket=bucket, Key=s3_key, Body=file_content)
        logger.info(f'Uploaded file to s3://{bucket}/{s3_key}')
        return True
    except (botocore.exceptions.ClientError, botocore.exceptions.BotoCoreError) as e:
        logger.error(f'Error uploading file to S3: {e}')
        return False


def upload_run_outputs(paths, bucket, prefix, run_name, s3_client=None):
    """Upload finished run files under ``prefix/run_name/``. Returns the keys that made it."""
    s3_client = s3_client or get_s3_client()
    uploaded = []
    for path in paths:
        s3_key = f"{prefix}/{run_name}/{os.path.basename(path)}"
        with open(path, 'rb') as f:
            if upload_file_to_s3(f.read(), bucket, s3_key, s3_client):
                uploaded.append(s3_key)
    return uploaded
